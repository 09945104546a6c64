#ifndef TARPRO_TRAINER_HPP
#define TARPRO_TRAINER_HPP

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "tarpro/autodiff.hpp"
#include "tarpro/core_types.hpp"
#include "tarpro/generator.hpp"
#include "tarpro/objective.hpp"
#include "tarpro/optim.hpp"

namespace tarpro {

struct TrainConfig {
  int steps = 150;
  double learning_rate = 1e-4;
  int sampler_steps = 4;
  PerturbationBudget budget{};
  LossWeights weights{};
  Seed seed{};
  std::string optimizer = "adam";
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  GeneratorConfig generator{};

  void validate() const {
    if (steps < 0) throw Error(ErrorKind::InvalidArgument, "steps must be >= 0");
    if (!(learning_rate > 0.0)) throw Error(ErrorKind::InvalidArgument, "learning_rate must be positive");
    if (sampler_steps < 1) throw Error(ErrorKind::InvalidArgument, "sampler_steps must be >= 1");
    if (optimizer != "adam") throw Error(ErrorKind::InvalidArgument, "unsupported optimizer '" + optimizer + "'");
    PerturbationBudget::make(budget.eta);
    weights.validate();
    generator.validate();
  }

  EditorConfig editor_config() const { return EditorConfig{sampler_steps, seed}; }
  AdamConfig adam() const { return AdamConfig{learning_rate, beta1, beta2, epsilon}; }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"steps", c.steps},
       {"learning_rate", c.learning_rate},
       {"sampler_steps", c.sampler_steps},
       {"eta", c.budget.eta},
       {"weights", c.weights},
       {"seed", c.seed.value},
       {"optimizer", c.optimizer},
       {"betas", {c.beta1, c.beta2}},
       {"epsilon", c.epsilon},
       {"generator", c.generator}};
}
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.steps = j.value("steps", d.steps);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.sampler_steps = j.value("sampler_steps", d.sampler_steps);
  c.budget = PerturbationBudget::make(j.value("eta", d.budget.eta));
  c.weights = j.value("weights", d.weights);
  c.seed = Seed{j.value("seed", d.seed.value)};
  c.optimizer = j.value("optimizer", d.optimizer);
  if (j.contains("betas")) {
    c.beta1 = j.at("betas").at(0).get<double>();
    c.beta2 = j.at("betas").at(1).get<double>();
  }
  c.epsilon = j.value("epsilon", d.epsilon);
  c.generator = j.value("generator", d.generator);
}

struct TrainRecord {
  int step = 0;
  double adv = 0.0;
  double reg = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;
};

struct TrainHistory {
  std::vector<TrainRecord> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  std::string to_csv() const {
    std::ostringstream os;
    os << "step,adv,reg,total,grad_norm\n" << std::setprecision(9);
    for (const auto& r : records) os << r.step << ',' << r.adv << ',' << r.reg << ',' << r.total << ',' << r.grad_norm << '\n';
    return os.str();
  }
  void write_csv(const io::fs::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(ErrorKind::WriteError, "cannot write " + path.string());
    os << to_csv();
  }
};

template <class T>
struct TrainResult {
  GeneratorParams<T> params;
  TrainHistory history;
};

/// An image to protect together with the id its cached targets are keyed by.
struct TrainSample {
  std::string id;
  Image image;
};

/// Optimizes a fresh generator against a frozen editor. The loss of a step
/// is summed over all samples (one sample = per-image protection).
template <class T, class Editor>
TrainResult<T> train(const std::vector<TrainSample>& samples, const PromptSet& prompts, const Editor& editor,
                     const TrainConfig& cfg) {
  cfg.validate();
  prompts.validate();
  const auto& gc = cfg.generator;
  for (const auto& s : samples) {
    validate_image(s.image);
    const Shape& sh = s.image.shape();
    if (sh != Shape{gc.channels, gc.height, gc.width})
      throw Error(ErrorKind::IncompatibleShapes,
                  "image " + s.id + " has shape " + shape_str(sh) + ", generator expects " +
                      shape_str(Shape{gc.channels, gc.height, gc.width}));
  }
  const EditorConfig ecfg = cfg.editor_config();
  const std::uint64_t before = editor.checksum();

  std::vector<ad::Var<T>> xs;
  std::vector<TargetCache<T>> caches;
  for (const auto& s : samples) {
    xs.push_back(ad::Var<T>::constant(s.image.data.template cast<T>()));
    caches.push_back(build_target_cache(xs.back(), prompts, editor, ecfg, s.id));
  }

  TrainResult<T> out{GeneratorParams<T>::init(gc, cfg.seed), {}};
  auto params = out.params.parameters();
  Adam<T> opt(params, cfg.adam());
  for (int step = 1; step <= cfg.steps; ++step) {
    out.params.zero_grad();
    ad::Var<T> adv = ad::Var<T>::constant(Tensor<T>::scalar(T{0}));
    ad::Var<T> reg = adv;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      auto delta = generate(xs[i], out.params, cfg.budget);
      auto xp = perturbed(xs[i], delta);
      adv = ad::add(adv, adv_loss(xp, prompts, caches[i], editor, ecfg, samples[i].id));
      reg = ad::add(reg, reg_loss(xp, prompts, caches[i], editor, ecfg, samples[i].id));
    }
    auto total = total_loss(adv, reg, cfg.weights);
    const double tv = static_cast<double>(total.value().item());
    if (!std::isfinite(tv)) throw Error(ErrorKind::NonFiniteLoss, "non-finite loss at step " + std::to_string(step));
    ad::backward(total);
    double g2 = 0.0;
    for (const auto& p : params)
      if (p.has_grad())
        for (auto g : p.grad().vec()) g2 += static_cast<double>(g) * static_cast<double>(g);
    const double gn = std::sqrt(g2);
    if (!std::isfinite(gn)) throw Error(ErrorKind::NonFiniteLoss, "non-finite gradient at step " + std::to_string(step));
    out.history.records.push_back(
        {step, static_cast<double>(adv.value().item()), static_cast<double>(reg.value().item()), tv, gn});
    opt.step();
  }
  out.params.zero_grad();
  if (editor.checksum() != before) throw Error(ErrorKind::InvalidArgument, "editor weights changed during training");
  return out;
}

template <class T, class Editor>
TrainResult<T> train(const Image& img, const PromptSet& prompts, const Editor& editor, const TrainConfig& cfg) {
  return train<T>(std::vector<TrainSample>{{"image", img}}, prompts, editor, cfg);
}

/// apply_perturbation(img, generate(img, params, budget))
template <class T>
Image protect(const Image& img, const GeneratorParams<T>& params, PerturbationBudget budget) {
  return apply_perturbation(img, generate(img, params, budget));
}

}  // namespace tarpro

#endif  // TARPRO_TRAINER_HPP
