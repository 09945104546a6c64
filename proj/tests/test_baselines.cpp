#include <gtest/gtest.h>

#include "expect_error.hpp"
#include "test_support.hpp"
#include "tarpro/baselines.hpp"
#include "tarpro/editor.hpp"

using namespace tarpro;
using namespace tarpro::testing;

namespace {

float linf(const Image& a, const Image& b) {
  float m = 0.0f;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

double recon_loss(const ToyEditor<float>& ed, const Image& x) {
  return ed.reconstruction_loss(ad::Var<float>::constant(x.data)).value().item();
}

PgdConfig short_pgd(int steps = 20) {
  PgdConfig c;
  c.steps = steps;
  return c;
}

}  // namespace

TEST(PgdConfig, DefaultsAndValidation) {
  const PgdConfig c;
  EXPECT_EQ(c.steps, 100);
  EXPECT_EQ(c.step_size, 2.0f / 255.0f);
  EXPECT_EQ(c.flavor, PgdFlavor::plain);
  PgdConfig bad;
  bad.step_size = 3.0f * bad.budget.eta;
  EXPECT_EQ(kind_of([&] { bad.validate(); }), ErrorKind::InvalidArgument);
  PgdConfig m;
  m.flavor = PgdFlavor::momentum;
  EXPECT_EQ(nlohmann::json(m).get<PgdConfig>().flavor, PgdFlavor::momentum);
}

TEST(PgdStep, ZeroGradientIsStationary) {
  Rng rng(Seed{1});
  const auto x = random_image(rng, 3, 8, 8);
  EXPECT_EQ(pgd_step(x, Tensor<float>(x.shape()), x, PgdConfig{}, PgdDirection::ascend), x);
}

TEST(PgdStep, SingleAscendStepClosedForm) {
  // Interior pixels so clamping to [0,1] is inactive.
  Rng rng(Seed{2});
  const auto x = random_image(rng, 3, 8, 8, 0.2, 0.8);
  for (float step : {2.0f / 255.0f, 12.0f / 255.0f}) {
    PgdConfig cfg;
    cfg.step_size = step;
    const auto y = pgd_step(x, Tensor<float>(x.shape(), 0.5f), x, cfg, PgdDirection::ascend);
    const float expect = std::min(step, cfg.budget.eta);
    for (std::size_t i = 0; i < x.data.size(); ++i) EXPECT_NEAR(y.data[i], x.data[i] + expect, 1e-7f);
  }
}

TEST(PgdStep, ProjectionBoundAndShapeCheck) {
  Rng rng(Seed{3});
  const auto x = random_image(rng, 3, 8, 8);
  PgdConfig cfg;
  cfg.step_size = 2.0f * cfg.budget.eta;
  Image cur = x;
  for (int t = 0; t < 10; ++t) {
    Tensor<float> g(x.shape());
    for (auto& v : g.vec()) v = static_cast<float>(rng.normal());
    cur = pgd_step(cur, g, x, cfg, t % 2 ? PgdDirection::ascend : PgdDirection::descend);
    EXPECT_LE(linf(cur, x), cfg.budget.eta + kBudgetSlack);
    for (float v : cur.data.vec()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
  EXPECT_EQ(kind_of([&] { pgd_step(x, Tensor<float>(Shape{3, 8, 9}), x, cfg, PgdDirection::ascend); }),
            ErrorKind::ShapeMismatch);
}

TEST(Advdm, AscendsReconstructionLoss) {
  const auto& s = Shipped::get();
  std::size_t up = 0;
  for (const auto& x : s.images) {
    const auto xp = advdm_protect(x, s.world.editor, short_pgd());
    up += recon_loss(s.world.editor, xp) >= recon_loss(s.world.editor, x);
    EXPECT_LE(linf(xp, x), kDefaultEta + kBudgetSlack);
  }
  EXPECT_GE(static_cast<double>(up) / static_cast<double>(s.images.size()), 0.95);
}

TEST(Advdm, ZeroStepsIsIdentity) {
  const auto& s = Shipped::get();
  EXPECT_EQ(advdm_protect(s.images[0], s.world.editor, short_pgd(0)), s.images[0]);
  EXPECT_EQ(latent_distance_protect(s.images[0], s.world.editor, short_pgd(0), LatentMode::repel), s.images[0]);
}

TEST(LatentRepel, IncreasesLatentDistance) {
  const auto& s = Shipped::get();
  // Before-distance is zero at x; also beat a random point of the same ball.
  Rng rng(Seed{4});
  std::size_t up = 0;
  for (const auto& x : s.images) {
    const auto xp = latent_distance_protect(x, s.world.editor, short_pgd(), LatentMode::repel);
    Image noise = x;
    for (auto& v : noise.data.vec()) v = std::clamp(v + static_cast<float>(rng.uniform(-kDefaultEta, kDefaultEta)), 0.0f, 1.0f);
    const double d = latent_distance(xp, x, s.world.editor);
    up += d > 0.0 && d > latent_distance(noise, x, s.world.editor);
    EXPECT_LE(linf(xp, x), kDefaultEta + kBudgetSlack);
  }
  EXPECT_GE(static_cast<double>(up) / static_cast<double>(s.images.size()), 0.95);
}

TEST(LatentAttract, TargetAtSelfStaysPut) {
  const auto& s = Shipped::get();
  const auto& x = s.images[1];
  const auto xp = latent_distance_protect(x, s.world.editor, short_pgd(), LatentMode::attract, x);
  EXPECT_LE(linf(xp, x), 2.0f / 255.0f + 1e-6f);
  EXPECT_LE(latent_distance(xp, x, s.world.editor), 1e-3);
}

TEST(LatentAttract, MovesTowardTarget) {
  const auto& s = Shipped::get();
  const auto& x = s.images[2];
  const auto t = gray_target(x.shape());
  const auto xp = latent_distance_protect(x, s.world.editor, short_pgd(), LatentMode::attract, t);
  EXPECT_LT(latent_distance(xp, t, s.world.editor), latent_distance(x, t, s.world.editor));
  EXPECT_LE(linf(xp, x), kDefaultEta + kBudgetSlack);
  EXPECT_EQ(kind_of([&] { latent_distance_protect(x, s.world.editor, short_pgd(), LatentMode::attract); }),
            ErrorKind::MissingTarget);
}

TEST(Flavors, MomentumAndVarianceReducedStayInBudget) {
  const auto& s = Shipped::get();
  const auto& x = s.images[3];
  for (PgdFlavor f : {PgdFlavor::momentum, PgdFlavor::variance_reduced}) {
    PgdConfig cfg = short_pgd(10);
    cfg.flavor = f;
    const auto xp = advdm_protect(x, s.world.editor, cfg);
    EXPECT_LE(linf(xp, x), kDefaultEta + kBudgetSlack) << to_string(f);
    EXPECT_GE(recon_loss(s.world.editor, xp), recon_loss(s.world.editor, x)) << to_string(f);
    EXPECT_EQ(xp, advdm_protect(x, s.world.editor, cfg)) << to_string(f);
  }
}
