#include <gtest/gtest.h>

#include "metric_oracles.hpp"
#include "expect_error.hpp"
#include "test_support.hpp"
#include "tarpro/editor.hpp"
#include "tarpro/metrics.hpp"

using namespace tarpro;
using namespace tarpro::testing;

namespace {

Image checkerboard(std::size_t n, bool invert) {
  Image img = Image::filled(1, n, n, 0.0f);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) img.data.at(0, y, x) = static_cast<float>(((x + y) % 2 == 0) != invert);
  return img;
}

}  // namespace

TEST(MetricConfig, Defaults) {
  const MetricConfig c;
  EXPECT_EQ(c.ssim_window, 11);
  EXPECT_EQ(c.ssim_sigma, 1.5);
  EXPECT_EQ(c.ssim_k1, 0.01);
  EXPECT_EQ(c.ssim_k2, 0.03);
  EXPECT_EQ(c.psnr_cap_db, 100.0);
  EXPECT_EQ(c.nsfw_threshold, 0.5);
  MetricConfig bad;
  bad.ssim_window = 4;
  EXPECT_EQ(kind_of([&] { bad.validate(); }), ErrorKind::InvalidArgument);
}

TEST(Psnr, IdenticalImagesHitTheCap) {
  Rng rng(Seed{1});
  const auto x = random_image(rng, 3, 8, 8);
  EXPECT_EQ(psnr(x, x), 100.0);
}

TEST(Psnr, UniformOffsetClosedForm) {
  const auto a = Image::filled(3, 8, 8, 0.3f);
  Image b = a;
  for (std::size_t i = 0; i < b.data.size(); ++i) b.data[i] = (i % 2) ? 0.4f : 0.2f;
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-5);
}

TEST(Psnr, MatchesDirectFormula) {
  Rng rng(Seed{2});
  for (int k = 0; k < 20; ++k) {
    const auto a = random_image(rng, 3, 8, 8), b = random_image(rng, 3, 8, 8);
    EXPECT_NEAR(psnr(a, b), naive_psnr(a, b), 1e-9);
    EXPECT_EQ(psnr(a, b), psnr(b, a));
    EXPECT_GE(psnr(a, b), 0.0);
  }
}

TEST(Psnr, ShapeMismatch) {
  EXPECT_EQ(kind_of([] { psnr(Image::filled(3, 8, 8, 0), Image::filled(3, 8, 9, 0)); }), ErrorKind::ShapeMismatch);
}

TEST(Ssim, IdenticalIsExactlyOne) {
  Rng rng(Seed{3});
  for (int k = 0; k < 5; ++k) {
    const auto x = random_image(rng, 3, 16, 16);
    EXPECT_EQ(ssim(x, x), 1.0);
  }
  const auto& img = Shipped::get().images[0];
  EXPECT_EQ(ssim(img, img), 1.0);
}

TEST(Ssim, MatchesNaiveSlidingWindow) {
  Rng rng(Seed{4});
  for (int k = 0; k < 20; ++k) {
    const auto a = random_image(rng, 3, 16, 16), b = random_image(rng, 3, 16, 16);
    const double v = ssim(a, b);
    EXPECT_NEAR(v, naive_ssim(a, b), 1e-6);
    EXPECT_EQ(v, ssim(b, a));
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  // Correlated pair away from zero, and a non-square layout.
  const auto a = random_image(rng, 3, 24, 17);
  Image b = a;
  for (auto& v : b.data.vec()) v = std::clamp(v + static_cast<float>(rng.uniform(-0.05, 0.05)), 0.0f, 1.0f);
  EXPECT_NEAR(ssim(a, b), naive_ssim(a, b), 1e-6);
  EXPECT_GT(ssim(a, b), 0.5);
}

TEST(Ssim, InvertedCheckerboardIsNegative) {
  const auto a = checkerboard(16, false), b = checkerboard(16, true);
  const double v = ssim(a, b), oracle = naive_ssim(a, b);
  EXPECT_LT(v, 0.0);
  EXPECT_NEAR(v, oracle, 1e-6);
}

TEST(Ssim, Errors) {
  EXPECT_EQ(kind_of([] { ssim(Image::filled(3, 10, 16, 0), Image::filled(3, 10, 16, 0)); }), ErrorKind::TooSmall);
  EXPECT_EQ(kind_of([] { ssim(Image::filled(3, 16, 16, 0), Image::filled(1, 16, 16, 0)); }), ErrorKind::ShapeMismatch);
}

TEST(NsfwRatio, Counting) {
  std::vector<double> scores(100, 0.1);
  for (int i = 0; i < 5; ++i) scores[static_cast<std::size_t>(i) * 7] = 0.9;
  EXPECT_DOUBLE_EQ(nsfw_ratio(scores), 0.05);
  EXPECT_EQ(nsfw_ratio(std::vector<double>(4, 0.99)), 1.0);
  EXPECT_EQ(nsfw_ratio(std::vector<double>{0.5}), 0.0);
  EXPECT_EQ(kind_of([] { nsfw_ratio(std::vector<double>{}); }), ErrorKind::EmptyInput);
  const auto& sc = Shipped::get().world.scorer;
  EXPECT_EQ(kind_of([&] { nsfw_ratio(std::vector<Image>{}, sc); }), ErrorKind::EmptyInput);
}

TEST(NsfwRatio, UnprotectedBenchmarkIsMostlyFlagged) {
  const auto& s = Shipped::get();
  std::vector<Image> edits;
  for (const auto& img : s.images)
    for (const auto& p : s.prompts.eval.maliciouses) edits.push_back(s.world.editor.edit(img, p, EditorConfig{}));
  const double r = nsfw_ratio(edits, s.world.scorer);
  EXPECT_GE(r, 0.9);
  EXPECT_LE(r, 1.0);
  std::vector<Image> clean;
  for (const auto& img : s.images)
    for (const auto& p : s.prompts.eval.normals) clean.push_back(s.world.editor.edit(img, p, EditorConfig{}));
  EXPECT_EQ(nsfw_ratio(clean, s.world.scorer), 0.0);
}
