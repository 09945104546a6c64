#ifndef TARPRO_TESTS_MINI_INSTANCE_HPP
#define TARPRO_TESTS_MINI_INSTANCE_HPP

// 3x16x16 crop of a shipped image, one normal prompt with two malicious
// children, one sampler step, a small double-precision generator.

#include "gradcheck.hpp"
#include "test_support.hpp"
#include "tarpro/tarpro.hpp"

namespace tarpro::testing {

struct MiniInstance {
  ToyEditor<double> editor;
  Tensor<double> x;
  PromptSet prompts;
  GeneratorParams<double> gen;
  TargetCache<double> cache{};
  PerturbationBudget budget{};
  LossWeights weights{};
  EditorConfig ecfg{1, Seed{0}};

  ad::Var<double> loss() const {
    const auto xv = ad::Var<double>::constant(x);
    const auto xp = perturbed(xv, generate(xv, gen, budget));
    return total_loss(adv_loss(xp, prompts, cache, editor, ecfg), reg_loss(xp, prompts, cache, editor, ecfg), weights);
  }
};

inline GeneratorConfig mini_generator_config() {
  GeneratorConfig g;
  g.hidden_dim = 16;
  g.num_heads = 2;
  g.height = 16;
  g.width = 16;
  // Larger than the default so every parameter moves the loss measurably.
  g.init_std = 0.3;
  return g;
}

inline MiniInstance make_mini_instance(Seed seed = Seed{0}) {
  const auto& s = Shipped::get();
  MiniInstance m{s.world.editor.cast<double>(), {}, {}, GeneratorParams<double>::init(mini_generator_config(), seed)};
  m.x = crop16(s.images[0]).data.cast<double>();
  m.prompts.normals.push_back(s.prompts.eval.normals[0]);
  Prompt a = make_malicious(m.prompts.normals[0], s.world.nsfw_direction, s.world.malicious_strength);
  Prompt b = make_malicious(m.prompts.normals[0], s.world.nsfw_direction, 0.5f * s.world.malicious_strength);
  a.id = "mal_a";
  b.id = "mal_b";
  m.prompts.maliciouses = {a, b};
  m.cache = build_target_cache(ad::Var<double>::constant(m.x), m.prompts, m.editor, m.ecfg);
  return m;
}

}  // namespace tarpro::testing

#endif  // TARPRO_TESTS_MINI_INSTANCE_HPP
