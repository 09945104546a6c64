#include <gtest/gtest.h>

#include <algorithm>
#include <limits>

#include "expect_error.hpp"
#include "test_support.hpp"
#include "tarpro/metrics.hpp"
#include "tarpro/trainer.hpp"

using namespace tarpro;
using namespace tarpro::testing;

namespace {

/// Editor double whose output is poisoned with NaN.
struct NanEditor {
  ad::Var<float> edit(const ad::Var<float>& img, const Prompt&, const EditorConfig&) const {
    return ad::add_scalar(img, std::numeric_limits<float>::quiet_NaN());
  }
  std::uint64_t checksum() const { return 1; }
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Default-config training on every shipped image, shared across tests.
const std::vector<TrainResult<float>>& default_runs() {
  static const std::vector<TrainResult<float>> runs = [] {
    const auto& s = Shipped::get();
    std::vector<TrainResult<float>> out;
    for (std::size_t i = 0; i < s.images.size(); ++i)
      out.push_back(train<float>(std::vector<TrainSample>{{world::numbered("img_", i), s.images[i]}}, s.prompts.train,
                                 s.world.editor, TrainConfig{}));
    return out;
  }();
  return runs;
}

}  // namespace

TEST(TrainConfig, Defaults) {
  const TrainConfig c;
  EXPECT_EQ(c.steps, 150);
  EXPECT_EQ(c.learning_rate, 1e-4);
  EXPECT_EQ(c.sampler_steps, 4);
  EXPECT_EQ(c.budget.eta, 8.0f / 255.0f);
  EXPECT_EQ(c.weights.lambda1, 1.0);
  EXPECT_EQ(c.weights.lambda2, 0.1);
  EXPECT_EQ(c.optimizer, "adam");
  EXPECT_EQ(c.beta1, 0.9);
  EXPECT_EQ(c.beta2, 0.999);
  EXPECT_EQ(c.epsilon, 1e-8);
}

TEST(TrainConfig, JsonRoundTripAndValidation) {
  TrainConfig c;
  c.steps = 7;
  c.learning_rate = 3e-4;
  c.seed = Seed{42};
  const auto back = nlohmann::json(c).get<TrainConfig>();
  EXPECT_EQ(back.steps, 7);
  EXPECT_EQ(back.learning_rate, 3e-4);
  EXPECT_EQ(back.seed.value, 42u);
  c.optimizer = "sgd";
  EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::InvalidArgument);
}

TEST(History, CsvHeader) {
  TrainHistory h;
  h.records.push_back({1, 0.5, 0.25, 0.525, 2.0});
  const auto csv = h.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,adv,reg,total,grad_norm");
  EXPECT_NE(csv.find("1,0.5,0.25,0.525,2"), std::string::npos);
}

TEST(Train, ZeroStepsReturnsInitialization) {
  const auto& s = Shipped::get();
  TrainConfig cfg;
  cfg.steps = 0;
  const auto r = train<float>(s.images[0], s.prompts.train, s.world.editor, cfg);
  EXPECT_TRUE(r.history.empty());
  const auto init = GeneratorParams<float>::init(cfg.generator, cfg.seed);
  const auto a = r.params.named(), b = init.named();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].second.value(), b[i].second.value()) << a[i].first;
}

TEST(Train, RejectsIncompatibleShapes) {
  const auto& s = Shipped::get();
  TrainConfig cfg;
  cfg.steps = 1;
  EXPECT_EQ(kind_of([&] { train<float>(Image::filled(3, 32, 32, 0.5f), s.prompts.train, s.world.editor, cfg); }),
            ErrorKind::IncompatibleShapes);
}

TEST(Train, NonFiniteLossAborts) {
  const auto& s = Shipped::get();
  TrainConfig cfg;
  cfg.steps = 3;
  try {
    train<float>(s.images[0], s.prompts.train, NanEditor{}, cfg);
    FAIL() << "expected NonFiniteLoss";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFiniteLoss);
    EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos);
  }
}

TEST(Train, BitIdenticalAcrossRuns) {
  const auto& s = Shipped::get();
  TrainConfig cfg;
  cfg.steps = 5;
  const auto a = train<float>(s.images[4], s.prompts.train, s.world.editor, cfg);
  const auto b = train<float>(s.images[4], s.prompts.train, s.world.editor, cfg);
  const auto na = a.params.named(), nb = b.params.named();
  for (std::size_t i = 0; i < na.size(); ++i) EXPECT_EQ(na[i].second.value(), nb[i].second.value()) << na[i].first;
  EXPECT_EQ(a.history.to_csv(), b.history.to_csv());
}

TEST(Train, MultiImageSetTrainsOneGenerator) {
  const auto& s = Shipped::get();
  TrainConfig cfg;
  cfg.steps = 2;
  const auto r = train<float>(std::vector<TrainSample>{{"a", s.images[0]}, {"b", s.images[1]}}, s.prompts.train,
                              s.world.editor, cfg);
  EXPECT_EQ(r.history.size(), 2u);
  const auto one = train<float>(std::vector<TrainSample>{{"a", s.images[0]}}, s.prompts.train, s.world.editor, cfg);
  EXPECT_GT(r.history.records[0].total, one.history.records[0].total);
}

TEST(DefaultTraining, HistoryLengthAndFiniteness) {
  for (const auto& r : default_runs()) {
    ASSERT_EQ(r.history.size(), 150u);
    for (std::size_t i = 0; i < r.history.size(); ++i) {
      const auto& rec = r.history.records[i];
      EXPECT_EQ(rec.step, static_cast<int>(i) + 1);
      EXPECT_TRUE(std::isfinite(rec.total) && std::isfinite(rec.grad_norm));
    }
  }
}

TEST(DefaultTraining, LossDecreases) {
  const auto& r = default_runs().front();
  EXPECT_LT(r.history.records.back().total, r.history.records.front().total);
  std::vector<double> first, last;
  for (std::size_t i = 0; i < 10; ++i) {
    first.push_back(r.history.records[i].total);
    last.push_back(r.history.records[r.history.size() - 1 - i].total);
  }
  EXPECT_LT(median(last), median(first));
}

TEST(DefaultTraining, EditorUntouched) {
  const auto& s = Shipped::get();
  const auto before = s.world.editor.checksum();
  (void)default_runs();
  EXPECT_EQ(s.world.editor.checksum(), before);
  EXPECT_EQ(world::load_world(data_dir() / "editor.tped").checksum, s.world.checksum);
}

TEST(Protect, ImperceptibleBoundedAndDeterministic) {
  const auto& s = Shipped::get();
  double total = 0.0;
  for (std::size_t i = 0; i < s.images.size(); ++i) {
    const auto& params = default_runs()[i].params;
    const Image xp = protect(s.images[i], params, PerturbationBudget{});
    double linf = 0.0;
    for (std::size_t k = 0; k < xp.data.size(); ++k)
      linf = std::max(linf, static_cast<double>(std::abs(xp.data[k] - s.images[i].data[k])));
    EXPECT_LE(linf, kDefaultEta + kBudgetSlack);
    EXPECT_EQ(xp, protect(s.images[i], params, PerturbationBudget{}));
    total += ssim(xp, s.images[i]);
  }
  EXPECT_GE(total / static_cast<double>(s.images.size()), 0.95);
}
