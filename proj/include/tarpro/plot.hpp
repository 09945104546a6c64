#ifndef TARPRO_PLOT_HPP
#define TARPRO_PLOT_HPP

// Minimal deterministic bar-chart rasterizer with a built-in 5x7 font.
// No timestamps or platform fonts, so output bytes depend only on the data.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "tarpro/io.hpp"

namespace tarpro::plot {

struct Rgb {
  std::uint8_t r, g, b;
};

class Canvas {
 public:
  Canvas(std::size_t w, std::size_t h, Rgb bg = {255, 255, 255}) : w_(w), h_(h), px_(w * h * 3) {
    fill_rect(0, 0, static_cast<int>(w), static_cast<int>(h), bg);
  }

  std::size_t width() const { return w_; }
  std::size_t height() const { return h_; }

  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= static_cast<int>(w_) || y >= static_cast<int>(h_)) return;
    auto* p = &px_[(static_cast<std::size_t>(y) * w_ + static_cast<std::size_t>(x)) * 3];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }
  void fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) set(x, y, c);
  }
  void hline(int x0, int x1, int y, Rgb c) { fill_rect(x0, y, x1, y + 1, c); }
  void vline(int x, int y0, int y1, Rgb c) { fill_rect(x, y0, x + 1, y1, c); }

  /// Draws text with its top-left corner at (x, y); returns the end x.
  int text(int x, int y, const std::string& s, Rgb c, int scale = 1);
  static int text_width(const std::string& s, int scale = 1) { return static_cast<int>(s.size()) * 6 * scale; }

  void save(const io::fs::path& path) const { io::write_png_bytes(path, w_, h_, 3, px_); }

 private:
  std::size_t w_, h_;
  std::vector<std::uint8_t> px_;
};

namespace detail {

/// 5x7 glyphs, one byte per row, low 5 bits used (bit 4 = leftmost column).
inline const std::array<std::uint8_t, 7>* glyph(char ch) {
  struct G {
    char c;
    std::array<std::uint8_t, 7> rows;
  };
  static const G table[] = {
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}}, {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}}, {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}}, {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}}, {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}}, {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}}, {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
      {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}}, {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
      {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}}, {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
      {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}}, {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}}, {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
      {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}}, {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
      {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}}, {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
      {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
      {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}}, {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
      {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}}, {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
      {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
      {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}}, {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
      {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}}, {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}}, {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
      {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}}, {'%', {0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03}},
      {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}}, {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
      {'/', {0x00, 0x01, 0x02, 0x04, 0x08, 0x10, 0x00}}, {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
  };
  const char u = (ch >= 'a' && ch <= 'z') ? static_cast<char>(ch - 'a' + 'A') : ch;
  for (const auto& g : table)
    if (g.c == u) return &g.rows;
  return nullptr;
}

}  // namespace detail

inline int Canvas::text(int x, int y, const std::string& s, Rgb c, int scale) {
  for (char ch : s) {
    if (const auto* g = detail::glyph(ch))
      for (int r = 0; r < 7; ++r)
        for (int col = 0; col < 5; ++col)
          if ((*g)[static_cast<std::size_t>(r)] & (0x10 >> col))
            fill_rect(x + col * scale, y + r * scale, x + (col + 1) * scale, y + (r + 1) * scale, c);
    x += 6 * scale;
  }
  return x;
}

struct Bar {
  std::string label;
  double value = 0.0;
};

struct Panel {
  std::string title;
  double y_max = 1.0;
  std::vector<Bar> bars;
  int decimals = 3;
};

inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline constexpr std::array<Rgb, 6> kPalette{{{31, 119, 180}, {255, 127, 14}, {44, 160, 44},
                                              {214, 39, 40},  {148, 103, 189}, {140, 86, 75}}};

/// Panels laid out left to right, each a bar per entry with its value on top.
inline Canvas bar_chart(const std::vector<Panel>& panels) {
  const int bar_w = 36, gap = 14, top = 28, plot_h = 160, bottom = 40, side = 16;
  std::vector<int> widths;
  int total_w = side;
  for (const auto& p : panels) {
    int w = static_cast<int>(p.bars.size()) * (bar_w + gap) + gap;
    w = std::max(w, Canvas::text_width(p.title) + 8);
    widths.push_back(w);
    total_w += w + side;
  }
  Canvas cv(static_cast<std::size_t>(total_w), static_cast<std::size_t>(top + plot_h + bottom));
  const Rgb ink{0, 0, 0}, grid{220, 220, 220};
  int x0 = side;
  for (std::size_t pi = 0; pi < panels.size(); ++pi) {
    const auto& p = panels[pi];
    const int w = widths[pi], base = top + plot_h;
    cv.text(x0, 6, p.title, ink);
    for (int k = 1; k <= 4; ++k) cv.hline(x0, x0 + w, base - plot_h * k / 4, grid);
    cv.hline(x0, x0 + w, base, ink);
    cv.vline(x0, top, base + 1, ink);
    for (std::size_t i = 0; i < p.bars.size(); ++i) {
      const auto& b = p.bars[i];
      const double frac = p.y_max > 0 ? std::clamp(b.value / p.y_max, 0.0, 1.0) : 0.0;
      const int h = static_cast<int>(std::lround(frac * plot_h));
      const int bx = x0 + gap + static_cast<int>(i) * (bar_w + gap);
      cv.fill_rect(bx, base - h, bx + bar_w, base, kPalette[i % kPalette.size()]);
      const std::string v = format_fixed(b.value, p.decimals);
      cv.text(bx + (bar_w - Canvas::text_width(v)) / 2, std::max(top - 10, base - h - 10), v, ink);
      std::string label = b.label.substr(0, 6);
      cv.text(bx + (bar_w - Canvas::text_width(label)) / 2, base + 6, label, ink);
      if (b.label.size() > 6) {
        std::string rest = b.label.substr(6, 6);
        cv.text(bx + (bar_w - Canvas::text_width(rest)) / 2, base + 16, rest, ink);
      }
    }
    x0 += w + side;
  }
  return cv;
}

}  // namespace tarpro::plot

#endif  // TARPRO_PLOT_HPP
