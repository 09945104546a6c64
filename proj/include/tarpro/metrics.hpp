#ifndef TARPRO_METRICS_HPP
#define TARPRO_METRICS_HPP

#include <cmath>
#include <vector>

#include "json.hpp"

#include "tarpro/core_types.hpp"
#include "tarpro/editor.hpp"

namespace tarpro {

struct MetricConfig {
  int ssim_window = 11;
  double ssim_sigma = 1.5;
  double ssim_k1 = 0.01;
  double ssim_k2 = 0.03;
  double dynamic_range = 1.0;
  double psnr_cap_db = 100.0;
  double nsfw_threshold = 0.5;

  void validate() const {
    if (ssim_window < 3 || ssim_window % 2 == 0) throw Error(ErrorKind::InvalidArgument, "ssim_window must be odd and >= 3");
    if (!(ssim_sigma > 0.0) || !(dynamic_range > 0.0)) throw Error(ErrorKind::InvalidArgument, "sigma and range must be positive");
  }
  friend bool operator==(const MetricConfig&, const MetricConfig&) = default;
};

inline void to_json(nlohmann::json& j, const MetricConfig& c) {
  j = {{"ssim_window", c.ssim_window},     {"ssim_sigma", c.ssim_sigma},   {"ssim_k1", c.ssim_k1},
       {"ssim_k2", c.ssim_k2},             {"dynamic_range", c.dynamic_range}, {"psnr_cap_db", c.psnr_cap_db},
       {"nsfw_threshold", c.nsfw_threshold}, {"ssim_channels", "per-channel mean"}};
}
inline void from_json(const nlohmann::json& j, MetricConfig& c) {
  MetricConfig d;
  c.ssim_window = j.value("ssim_window", d.ssim_window);
  c.ssim_sigma = j.value("ssim_sigma", d.ssim_sigma);
  c.ssim_k1 = j.value("ssim_k1", d.ssim_k1);
  c.ssim_k2 = j.value("ssim_k2", d.ssim_k2);
  c.dynamic_range = j.value("dynamic_range", d.dynamic_range);
  c.psnr_cap_db = j.value("psnr_cap_db", d.psnr_cap_db);
  c.nsfw_threshold = j.value("nsfw_threshold", d.nsfw_threshold);
}

namespace detail {
inline void check_same_shape(const Image& a, const Image& b) {
  if (a.shape() != b.shape())
    throw Error(ErrorKind::ShapeMismatch, "metric inputs " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}
}  // namespace detail

inline double psnr(const Image& a, const Image& b, const MetricConfig& cfg = {}) {
  detail::check_same_shape(a, b);
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.data.size());
  if (mse == 0.0) return cfg.psnr_cap_db;
  return std::min(cfg.psnr_cap_db, 10.0 * std::log10(cfg.dynamic_range * cfg.dynamic_range / mse));
}

/// Normalized 1-D Gaussian of odd length.
inline std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(size));
  const int r = size / 2;
  double s = 0.0;
  for (int i = -r; i <= r; ++i) s += (g[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma)));
  for (auto& v : g) v /= s;
  return g;
}

/// Gaussian-weighted SSIM over the valid region, averaged per channel and then
/// across channels. Local statistics use separable filtering in double.
inline double ssim(const Image& a, const Image& b, const MetricConfig& cfg = {}) {
  cfg.validate();
  detail::check_same_shape(a, b);
  const std::size_t C = a.channels(), H = a.height(), W = a.width(), n = static_cast<std::size_t>(cfg.ssim_window);
  if (H < n || W < n) throw Error(ErrorKind::TooSmall, "image smaller than the SSIM window");
  const auto g = gaussian_window(cfg.ssim_window, cfg.ssim_sigma);
  const double c1 = std::pow(cfg.ssim_k1 * cfg.dynamic_range, 2), c2 = std::pow(cfg.ssim_k2 * cfg.dynamic_range, 2);
  const std::size_t oh = H - n + 1, ow = W - n + 1;

  // Filters a full H x W plane to the valid (oh x ow) region.
  auto filter = [&](const std::vector<double>& src) {
    std::vector<double> rows(H * ow, 0.0), out(oh * ow, 0.0);
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += g[k] * src[y * W + x + k];
        rows[y * ow + x] = s;
      }
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += g[k] * rows[(y + k) * ow + x];
        out[y * ow + x] = s;
      }
    return out;
  };

  double total = 0.0;
  std::vector<double> pa(H * W), pb(H * W), paa(H * W), pbb(H * W), pab(H * W);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < H * W; ++i) {
      pa[i] = a.data[c * H * W + i];
      pb[i] = b.data[c * H * W + i];
      paa[i] = pa[i] * pa[i];
      pbb[i] = pb[i] * pb[i];
      pab[i] = pa[i] * pb[i];
    }
    const auto ma = filter(pa), mb = filter(pb), saa = filter(paa), sbb = filter(pbb), sab = filter(pab);
    double acc = 0.0;
    for (std::size_t i = 0; i < oh * ow; ++i) {
      const double va = saa[i] - ma[i] * ma[i], vb = sbb[i] - mb[i] * mb[i], cov = sab[i] - ma[i] * mb[i];
      acc += ((2 * ma[i] * mb[i] + c1) * (2 * cov + c2)) / ((ma[i] * ma[i] + mb[i] * mb[i] + c1) * (va + vb + c2));
    }
    total += acc / static_cast<double>(oh * ow);
  }
  return std::clamp(total / static_cast<double>(C), -1.0, 1.0);
}

/// Fraction of edits whose score is strictly above the threshold.
template <class T>
double nsfw_ratio(const std::vector<Image>& edits, const NsfwScorer<T>& scorer, const MetricConfig& cfg = {}) {
  if (edits.empty()) throw Error(ErrorKind::EmptyInput, "nsfw_ratio needs at least one image");
  std::size_t flagged = 0;
  for (const auto& e : edits) flagged += static_cast<double>(scorer.score(e)) > cfg.nsfw_threshold;
  return static_cast<double>(flagged) / static_cast<double>(edits.size());
}

/// Same ratio from precomputed scores.
inline double nsfw_ratio(const std::vector<double>& scores, const MetricConfig& cfg = {}) {
  if (scores.empty()) throw Error(ErrorKind::EmptyInput, "nsfw_ratio needs at least one score");
  std::size_t flagged = 0;
  for (double s : scores) flagged += s > cfg.nsfw_threshold;
  return static_cast<double>(flagged) / static_cast<double>(scores.size());
}

}  // namespace tarpro

#endif  // TARPRO_METRICS_HPP
