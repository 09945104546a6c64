#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "mini_instance.hpp"
#include "expect_error.hpp"
#include "test_support.hpp"
#include "tarpro/objective.hpp"

using namespace tarpro;
using namespace tarpro::testing;

namespace {

/// The shipped training split: 10 normals, 30 malicious children.
const PromptSet& train_prompts() { return Shipped::get().prompts.train; }

Perturbation random_delta(Rng& rng, const Shape& s, float eta = kDefaultEta) {
  Tensor<float> d(s);
  for (auto& v : d.vec()) v = static_cast<float>(rng.uniform(-eta, eta));
  return Perturbation::make(std::move(d), PerturbationBudget{eta});
}

}  // namespace

TEST(LossWeights, Defaults) {
  const LossWeights w;
  EXPECT_EQ(w.lambda1, 1.0);
  EXPECT_EQ(w.lambda2, 0.1);
}

TEST(TargetCache, OneEntryPerNormal) {
  const auto& s = Shipped::get();
  ASSERT_EQ(train_prompts().N(), 10u);
  ASSERT_EQ(train_prompts().I(), 30u);
  const auto cache = build_target_cache<float>(s.images[0], train_prompts(), s.world.editor, EditorConfig{});
  EXPECT_EQ(cache.size(), 10u);
  EXPECT_TRUE(build_target_cache<float>(s.images[0], PromptSet{}, s.world.editor, EditorConfig{}).empty());
}

TEST(TargetCache, EntriesEqualEditsBitExactly) {
  const auto& s = Shipped::get();
  const auto cache = build_target_cache<float>(s.images[1], train_prompts(), s.world.editor, EditorConfig{}, "img");
  for (const auto& p : train_prompts().normals) {
    const auto direct = s.world.editor.edit(s.images[1], p, EditorConfig{});
    EXPECT_EQ(cache.at("img", p.id).value(), direct.data) << p.id;
    EXPECT_FALSE(cache.at("img", p.id).requires_grad());
  }
  EXPECT_EQ(kind_of([&] { cache.at("other", train_prompts().normals[0].id); }), ErrorKind::MissingParent);
}

TEST(TargetCache, MissingParentRejected) {
  const auto& s = Shipped::get();
  PromptSet ps;
  ps.maliciouses.push_back(train_prompts().maliciouses[0]);
  EXPECT_EQ(kind_of([&] { build_target_cache<float>(s.images[0], ps, s.world.editor, EditorConfig{}); }),
            ErrorKind::MissingParent);
}

TEST(AdvLoss, EmptyMaliciousSetIsZero) {
  const auto& s = Shipped::get();
  PromptSet ps;
  ps.normals = train_prompts().normals;
  const auto cache = build_target_cache<float>(s.images[0], ps, s.world.editor, EditorConfig{});
  Rng rng(Seed{1});
  EXPECT_EQ(adv_loss(s.images[0], random_delta(rng, s.images[0].shape()), ps, cache, s.world.editor, EditorConfig{}), 0.0);
}

TEST(AdvLoss, IdentityEditorGivesSquaredDelta) {
  // With an editor that returns its input, every term is mse(x + delta, x).
  const auto& s = Shipped::get();
  const IdentityEditor<float> id;
  const auto cache = build_target_cache<float>(s.images[2], train_prompts(), id, EditorConfig{});
  Rng rng(Seed{2});
  const auto delta = random_delta(rng, s.images[2].shape());
  double expected = 0.0;
  for (std::size_t i = 0; i < delta.data.size(); ++i) {
    const double xp = std::clamp(static_cast<double>(s.images[2].data[i]) + delta.data[i], 0.0, 1.0);
    const double d = xp - s.images[2].data[i];
    expected += d * d;
  }
  expected = expected / static_cast<double>(delta.data.size()) * static_cast<double>(train_prompts().I());
  EXPECT_NEAR(adv_loss(s.images[2], delta, train_prompts(), cache, id, EditorConfig{}), expected, 1e-5 * expected);
}

TEST(AdvLoss, NonNegativeAndZeroForDegeneratePrompts) {
  const auto& s = Shipped::get();
  const auto& img = s.images[3];
  // Malicious prompts identical to their parents produce their targets exactly.
  PromptSet ps;
  ps.normals = {train_prompts().normals[0]};
  Prompt twin = ps.normals[0];
  twin.id = "twin";
  twin.kind = PromptKind::malicious;
  twin.parent_id = ps.normals[0].id;
  ps.maliciouses = {twin};
  const auto cache = build_target_cache<float>(img, ps, s.world.editor, EditorConfig{});
  const auto zero = Perturbation::zeros(img.shape());
  EXPECT_EQ(adv_loss(img, zero, ps, cache, s.world.editor, EditorConfig{}), 0.0);
  EXPECT_EQ(reg_loss(img, zero, ps, cache, s.world.editor, EditorConfig{}), 0.0);
  const auto full = build_target_cache<float>(img, train_prompts(), s.world.editor, EditorConfig{});
  EXPECT_GT(adv_loss(img, zero, train_prompts(), full, s.world.editor, EditorConfig{}), 0.0);
}

TEST(RegLoss, ZeroDeltaIsExactlyZero) {
  const auto& s = Shipped::get();
  for (std::size_t i = 0; i < 3; ++i) {
    const auto cache = build_target_cache<float>(s.images[i], train_prompts(), s.world.editor, EditorConfig{});
    EXPECT_EQ(reg_loss(s.images[i], Perturbation::zeros(s.images[i].shape()), train_prompts(), cache, s.world.editor,
                       EditorConfig{}),
              0.0);
  }
  const auto empty = build_target_cache<float>(s.images[0], PromptSet{}, s.world.editor, EditorConfig{});
  Rng rng(Seed{3});
  EXPECT_EQ(reg_loss(s.images[0], random_delta(rng, s.images[0].shape()), PromptSet{}, empty, s.world.editor,
                     EditorConfig{}),
            0.0);
}

TEST(RegLoss, NondecreasingUnderDeltaScaling) {
  const auto& s = Shipped::get();
  Rng rng(Seed{4});
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& img = s.images[i];
    const auto cache = build_target_cache<float>(img, train_prompts(), s.world.editor, EditorConfig{});
    const auto base = random_delta(rng, img.shape());
    double prev = -1.0;
    for (float k : {0.25f, 0.5f, 1.0f}) {
      Tensor<float> d = base.data;
      for (auto& v : d.vec()) v *= k;
      const double r = reg_loss(img, Perturbation::make(d, base.budget), train_prompts(), cache, s.world.editor, EditorConfig{});
      EXPECT_GE(r, prev) << "image " << i << " scale " << k;
      prev = r;
    }
  }
}

TEST(TotalLoss, Arithmetic) {
  EXPECT_NEAR(total_loss(2.0, 4.0, LossWeights{}), 2.4, 1e-12);
  EXPECT_EQ(total_loss(0.0, 0.0, LossWeights{}), 0.0);
  EXPECT_EQ(total_loss(1.0, 0.0, LossWeights{}), 1.0);
  const auto a = ad::Var<double>::constant(Tensor<double>::scalar(2.0));
  const auto r = ad::Var<double>::constant(Tensor<double>::scalar(4.0));
  EXPECT_NEAR(total_loss(a, r, LossWeights{}).value().item(), 2.4, 1e-12);
}

TEST(TotalLoss, LossIsOrderIndependent) {
  // Reduction runs in prompt-id order, so shuffling the input lists is invisible.
  const auto& s = Shipped::get();
  PromptSet shuffled = train_prompts();
  std::reverse(shuffled.normals.begin(), shuffled.normals.end());
  std::rotate(shuffled.maliciouses.begin(), shuffled.maliciouses.begin() + 7, shuffled.maliciouses.end());
  const auto cache = build_target_cache<float>(s.images[0], train_prompts(), s.world.editor, EditorConfig{});
  Rng rng(Seed{5});
  const auto d = random_delta(rng, s.images[0].shape());
  EXPECT_EQ(adv_loss(s.images[0], d, train_prompts(), cache, s.world.editor, EditorConfig{}),
            adv_loss(s.images[0], d, shuffled, cache, s.world.editor, EditorConfig{}));
  EXPECT_EQ(reg_loss(s.images[0], d, train_prompts(), cache, s.world.editor, EditorConfig{}),
            reg_loss(s.images[0], d, shuffled, cache, s.world.editor, EditorConfig{}));
}

TEST(TotalLoss, TargetsReceiveNoGradient) {
  const auto m = make_mini_instance();
  ad::backward(m.loss());
  for (const auto& [key, target] : m.cache.entries()) EXPECT_FALSE(target.has_grad()) << key.second;
  std::size_t with_grad = 0;
  for (const auto& p : m.gen.parameters()) with_grad += p.has_grad();
  EXPECT_EQ(with_grad, m.gen.parameters().size());
}

TEST(TotalLoss, ParameterGradientsMatchFiniteDifferences) {
  const auto m = make_mini_instance();
  Rng rng(Seed{6});
  std::size_t checked = 0;
  for (auto& [name, leaf] : m.gen.named()) {
    const auto r = grad_check(leaf, [&] { return m.loss(); }, random_coords(rng, leaf.size(), 2), 1e-3, 1e-3);
    EXPECT_EQ(r.failures, 0u) << name << " max rel error " << r.max_rel_error;
    checked += r.checked;
  }
  EXPECT_GE(checked, 20u);
}

TEST(Metric, PluggableMetricIsUsed) {
  const auto m = make_mini_instance();
  const auto xv = ad::Var<double>::constant(m.x);
  ImageMetric<double> sum_sq = [](const ad::Var<double>& a, const ad::Var<double>& b) {
    return ad::sum(ad::square(ad::sub(a, b)));
  };
  const double mse_v = adv_loss(xv, m.prompts, m.cache, m.editor, m.ecfg).value().item();
  const double sum_v = adv_loss(xv, m.prompts, m.cache, m.editor, m.ecfg, "", sum_sq).value().item();
  EXPECT_NEAR(sum_v, mse_v * static_cast<double>(m.x.size()), 1e-9 * sum_v);
}
