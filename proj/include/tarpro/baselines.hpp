#ifndef TARPRO_BASELINES_HPP
#define TARPRO_BASELINES_HPP

// Untargeted-protection baselines driven by L-infinity PGD:
//   advdm:           ascend the editor's autoencoder reconstruction loss
//   latent repel:    ascend ||E(x') - E(x)||^2
//   latent attract:  descend ||E(x') - E(target)||^2
// Optional flavors: MI (momentum on L1-normalized gradients) and VR
// (gradients averaged over noisy neighbors of the iterate).

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "tarpro/autodiff.hpp"
#include "tarpro/core_types.hpp"

namespace tarpro {

enum class PgdFlavor { plain, momentum, variance_reduced };

inline const char* to_string(PgdFlavor f) {
  switch (f) {
    case PgdFlavor::plain: return "plain";
    case PgdFlavor::momentum: return "mi";
    case PgdFlavor::variance_reduced: return "vr";
  }
  return "plain";
}
inline PgdFlavor parse_pgd_flavor(const std::string& s) {
  if (s == "plain") return PgdFlavor::plain;
  if (s == "mi") return PgdFlavor::momentum;
  if (s == "vr") return PgdFlavor::variance_reduced;
  throw Error(ErrorKind::InvalidArgument, "unknown PGD flavor '" + s + "'");
}

struct PgdConfig {
  int steps = 100;
  float step_size = 2.0f / 255.0f;
  PerturbationBudget budget{};
  Seed seed{};
  PgdFlavor flavor = PgdFlavor::plain;
  float momentum_decay = 1.0f;  // used by the MI flavor only
  int vr_samples = 4;           // used by the VR flavor only
  float vr_radius = 1.5f;       // neighbor radius in units of eta

  void validate() const {
    if (steps < 0) throw Error(ErrorKind::InvalidArgument, "PGD steps must be >= 0");
    if (!(step_size > 0.0f)) throw Error(ErrorKind::InvalidArgument, "PGD step_size must be positive");
    if (step_size > 2.0f * budget.eta + kBudgetSlack) throw Error(ErrorKind::InvalidArgument, "PGD step_size exceeds 2*eta");
    if (vr_samples < 1) throw Error(ErrorKind::InvalidArgument, "vr_samples must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const PgdConfig& c) {
  j = {{"steps", c.steps},       {"step_size", c.step_size},           {"eta", c.budget.eta},
       {"seed", c.seed.value},   {"flavor", to_string(c.flavor)},      {"momentum_decay", c.momentum_decay},
       {"vr_samples", c.vr_samples}, {"vr_radius", c.vr_radius}};
}
inline void from_json(const nlohmann::json& j, PgdConfig& c) {
  PgdConfig d;
  c.steps = j.value("steps", d.steps);
  c.step_size = j.value("step_size", d.step_size);
  c.budget = PerturbationBudget::make(j.value("eta", d.budget.eta));
  c.seed = Seed{j.value("seed", d.seed.value)};
  c.flavor = parse_pgd_flavor(j.value("flavor", std::string("plain")));
  c.momentum_decay = j.value("momentum_decay", d.momentum_decay);
  c.vr_samples = j.value("vr_samples", d.vr_samples);
  c.vr_radius = j.value("vr_radius", d.vr_radius);
}

enum class PgdDirection { ascend, descend };

/// x_adv +- step_size * sign(grad), projected onto the eta-ball around x_orig
/// and clamped to [0,1]. sign(0) = 0.
inline Image pgd_step(const Image& x_adv, const Tensor<float>& grad, const Image& x_orig, const PgdConfig& cfg,
                      PgdDirection dir) {
  if (x_adv.shape() != x_orig.shape() || grad.shape() != x_adv.shape())
    throw Error(ErrorKind::ShapeMismatch, "pgd_step operands must share a shape");
  const float s = dir == PgdDirection::ascend ? cfg.step_size : -cfg.step_size, eta = cfg.budget.eta;
  Image out = x_adv;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const float g = grad[i];
    const float sg = g > 0.0f ? 1.0f : (g < 0.0f ? -1.0f : 0.0f);
    const float o = x_orig.data[i];
    out.data[i] = std::clamp(std::clamp(x_adv.data[i] + s * sg, o - eta, o + eta), 0.0f, 1.0f);
  }
  return out;
}

enum class LatentMode { repel, attract };

namespace detail {

/// Objective value and gradient with respect to the image at x.
template <class Objective>
Tensor<float> objective_grad(const Image& x, const Objective& obj) {
  auto v = ad::Var<float>::parameter(x.data);
  ad::backward(obj(v));
  return v.has_grad() ? v.grad() : Tensor<float>(x.shape());
}

/// Generic PGD loop; start is the first iterate (already inside the ball).
template <class Objective>
Image run_pgd(const Image& x, Image start, const PgdConfig& cfg, PgdDirection dir, const Objective& obj) {
  Image cur = std::move(start);
  Rng rng(derive(cfg.seed, 0x7667));
  Tensor<float> mom(x.shape());
  for (int t = 0; t < cfg.steps; ++t) {
    Tensor<float> g;
    if (cfg.flavor == PgdFlavor::variance_reduced) {
      g = Tensor<float>(x.shape());
      for (int k = 0; k < cfg.vr_samples; ++k) {
        Image nb = cur;
        const double r = cfg.vr_radius * cfg.budget.eta;
        for (auto& v : nb.data.vec()) v = std::clamp(static_cast<float>(v + rng.uniform(-r, r)), 0.0f, 1.0f);
        const auto gk = objective_grad(nb, obj);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gk[i];
      }
    } else {
      g = objective_grad(cur, obj);
    }
    if (cfg.flavor == PgdFlavor::momentum) {
      double l1 = 0.0;
      for (float v : g.vec()) l1 += std::abs(v);
      const float inv = l1 > 0.0 ? static_cast<float>(static_cast<double>(g.size()) / l1) : 0.0f;
      for (std::size_t i = 0; i < g.size(); ++i) mom[i] = cfg.momentum_decay * mom[i] + g[i] * inv;
      g = mom;
    }
    cur = pgd_step(cur, g, x, cfg, dir);
  }
  return cur;
}

}  // namespace detail

/// Ascends the editor's reconstruction loss mse(D(E(x')), x') from x' = x.
template <class Editor>
Image advdm_protect(const Image& x, const Editor& editor, const PgdConfig& cfg) {
  cfg.validate();
  validate_image(x);
  return detail::run_pgd(x, x, cfg, PgdDirection::ascend,
                         [&](const ad::Var<float>& v) { return editor.reconstruction_loss(v); });
}

/// Squared latent distance between E(x') and a fixed reference latent.
template <class Editor>
double latent_distance(const Image& a, const Image& b, const Editor& editor) {
  auto za = editor.encode(ad::Var<float>::constant(a.data)).tokens;
  auto zb = editor.encode(ad::Var<float>::constant(b.data)).tokens;
  return ad::sum(ad::square(ad::sub(za, zb))).value().item();
}

/// Repel ascends ||E(x') - E(x)||^2 from a seeded uniform start inside the
/// ball (the gradient vanishes at x' = x). Attract descends ||E(x') - E(t)||^2
/// from x' = x.
template <class Editor>
Image latent_distance_protect(const Image& x, const Editor& editor, const PgdConfig& cfg, LatentMode mode,
                              const std::optional<Image>& target = std::nullopt) {
  cfg.validate();
  validate_image(x);
  if (mode == LatentMode::attract && !target) throw Error(ErrorKind::MissingTarget, "attract mode needs a target image");
  const Image& ref = mode == LatentMode::attract ? *target : x;
  if (ref.shape() != x.shape()) throw Error(ErrorKind::ShapeMismatch, "target shape differs from the image");
  const auto zref = ad::Var<float>::constant(editor.encode(ad::Var<float>::constant(ref.data)).tokens.value());
  auto obj = [&](const ad::Var<float>& v) { return ad::sum(ad::square(ad::sub(editor.encode(v).tokens, zref))); };
  if (mode == LatentMode::attract) return detail::run_pgd(x, x, cfg, PgdDirection::descend, obj);
  Image start = x;
  if (cfg.steps > 0) {
    Rng rng(derive(cfg.seed, 0x72706c));
    const double eta = cfg.budget.eta;
    for (std::size_t i = 0; i < start.data.size(); ++i)
      start.data[i] = std::clamp(static_cast<float>(x.data[i] + rng.uniform(-eta, eta)), 0.0f, 1.0f);
  }
  return detail::run_pgd(x, std::move(start), cfg, PgdDirection::ascend, obj);
}

/// Default attract target: a uniform mid-gray image.
inline Image gray_target(const Shape& s, float level = 0.5f) { return Image(Tensor<float>(s, level)); }

}  // namespace tarpro

#endif  // TARPRO_BASELINES_HPP
