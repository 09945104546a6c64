#ifndef TARPRO_TESTS_SUPPORT_HPP
#define TARPRO_TESTS_SUPPORT_HPP

#include <string>

#include "tarpro/core_types.hpp"
#include "tarpro/io.hpp"
#include "tarpro/toy_world.hpp"

namespace tarpro::testing {

inline io::fs::path data_dir() { return TARPRO_DATA_DIR; }

/// Shipped editor, scorer and prompts, loaded once per test binary.
struct Shipped {
  world::LoadedWorld world;
  io::PromptFile prompts;
  std::vector<Image> images;

  static const Shipped& get() {
    static const Shipped s = [] {
      Shipped x;
      x.world = world::load_world(data_dir() / "editor.tped");
      x.prompts = io::load_prompts(data_dir() / "prompts.json");
      for (int i = 0; i < 10; ++i) x.images.push_back(io::load_png(data_dir() / "images" / (world::numbered("img_", i) + ".png")));
      return x;
    }();
    return s;
  }
};

inline Image random_image(Rng& rng, std::size_t c, std::size_t h, std::size_t w, double lo = 0.0, double hi = 1.0) {
  Image img = Image::filled(c, h, w, 0.0f);
  for (auto& v : img.data.vec()) v = static_cast<float>(rng.uniform(lo, hi));
  return img;
}

/// 16x16 crop of a shipped image, a cheap miniature instance.
inline Image crop16(const Image& img, std::size_t y0 = 16, std::size_t x0 = 16) {
  Image out = Image::filled(img.channels(), 16, 16, 0.0f);
  for (std::size_t c = 0; c < img.channels(); ++c)
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 16; ++x) out.data.at(c, y, x) = img.data.at(c, y0 + y, x0 + x);
  return out;
}

}  // namespace tarpro::testing

#endif  // TARPRO_TESTS_SUPPORT_HPP
