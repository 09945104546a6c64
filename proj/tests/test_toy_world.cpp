#include <gtest/gtest.h>

#include "test_support.hpp"
#include "tarpro/harness.hpp"
#include "tarpro/toy_world.hpp"

using namespace tarpro;
using namespace tarpro::testing;

TEST(Patterns, MutuallyOrthogonal) {
  const std::size_t f = 8;
  const std::vector<std::vector<double>> ps{world::pattern_scanlines(f), world::pattern_gate(f),
                                            world::pattern_contraband(f)};
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t j = i + 1; j < ps.size(); ++j) EXPECT_NEAR(world::dot(ps[i], ps[j]), 0.0, 1e-9) << i << "," << j;
}

TEST(Scenes, RenderingIsSeeded) {
  const auto a = world::render_dataset(Seed{5}, 3, 64), b = world::render_dataset(Seed{5}, 3, 64);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i], b[i]);
    EXPECT_NO_THROW(validate_image(a[i]));
  }
  EXPECT_FALSE(a[0] == world::render_dataset(Seed{6}, 1, 64)[0]);
}

TEST(ShippedWorld, MetadataMatchesAssets) {
  const auto info = read_json_file(data_dir() / "world.json");
  const auto& s = Shipped::get();
  EXPECT_EQ(info.at("toy_world_version"), world::kToyWorldVersion);
  EXPECT_FLOAT_EQ(info.at("malicious_strength").get<float>(), s.world.malicious_strength);
  EXPECT_LT(info.at("reconstruction_mse").get<double>(), world::kReconstructionThreshold);
  EXPECT_GE(info.at("scorer_accuracy").get<double>(), 0.95);
  EXPECT_EQ(s.images.size(), 10u);
  EXPECT_EQ(s.prompts.train.N(), 10u);
  EXPECT_EQ(s.prompts.train.I(), 30u);
  EXPECT_EQ(s.prompts.eval.N(), 20u);
  EXPECT_EQ(s.prompts.eval.I(), 20u);
  EXPECT_NO_THROW(s.prompts.train.validate());
  EXPECT_NO_THROW(s.prompts.eval.validate());
}

TEST(Build, DeterministicAndCalibrated) {
  // Rebuilding from the shipped seed reproduces the shipped editor bit for bit.
  const auto w = world::build_toy_world(world::WorldConfig{}, Seed{0});
  const auto path = io::fs::temp_directory_path() / "tarpro_test_world.tped";
  w.save(path);
  const auto loaded = world::load_world(path);
  io::fs::remove(path);
  EXPECT_EQ(loaded.checksum, Shipped::get().world.checksum);
  EXPECT_EQ(w.malicious_strength, Shipped::get().world.malicious_strength);
  EXPECT_LT(w.reconstruction_mse, world::kReconstructionThreshold);
  EXPECT_GE(w.scorer_accuracy, 0.95);

  // Calibration: at the chosen strength at least the target share of edits is flagged.
  const auto imgs = world::render_dataset(Seed{99}, 20, 64);
  const auto& pr = Shipped::get().prompts.eval;
  std::size_t flagged = 0;
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    const auto m = make_malicious(pr.normals[i % pr.N()], loaded.nsfw_direction, loaded.malicious_strength);
    flagged += loaded.scorer.flagged(loaded.editor.edit(imgs[i], m, EditorConfig{}));
  }
  EXPECT_GE(static_cast<double>(flagged) / static_cast<double>(imgs.size()), 0.9);
}
