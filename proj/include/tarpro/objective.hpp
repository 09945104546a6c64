#ifndef TARPRO_OBJECTIVE_HPP
#define TARPRO_OBJECTIVE_HPP

// Targeted-protection objective. Targets are edits of the ORIGINAL image
// under normal prompts, computed once and held as detached constants:
//
//   L_adv = sum_i M(g(x + delta, y_mal_i), g(x, parent(y_mal_i)))
//   L_reg = sum_n M(g(x + delta, y_nor_n), g(x, y_nor_n))
//   L     = lambda1 * L_adv + lambda2 * L_reg
//
// M defaults to the per-prompt mean squared pixel error. Sums run in
// ascending prompt-id order.

#include <algorithm>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "tarpro/autodiff.hpp"
#include "tarpro/core_types.hpp"
#include "tarpro/editor.hpp"

namespace tarpro {

struct LossWeights {
  double lambda1 = 1.0;
  double lambda2 = 0.1;

  void validate() const {
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw Error(ErrorKind::InvalidArgument, "loss weights must be >= 0");
  }
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

inline void to_json(nlohmann::json& j, const LossWeights& w) { j = {{"lambda1", w.lambda1}, {"lambda2", w.lambda2}}; }
inline void from_json(const nlohmann::json& j, LossWeights& w) {
  w.lambda1 = j.value("lambda1", 1.0);
  w.lambda2 = j.value("lambda2", 0.1);
}

/// Distance between an edit and its target; must return a scalar Var.
template <class T>
using ImageMetric = std::function<ad::Var<T>(const ad::Var<T>&, const ad::Var<T>&)>;

template <class T>
ImageMetric<T> mse_metric() {
  return [](const ad::Var<T>& a, const ad::Var<T>& b) { return ad::mse(a, b); };
}

/// Editor test double that ignores the prompt and returns its input.
template <class T>
struct IdentityEditor {
  ad::Var<T> edit(const ad::Var<T>& img, const Prompt&, const EditorConfig&) const { return img; }
  std::uint64_t checksum() const { return 0; }
};

/// Frozen edits of the original image, keyed by (image id, normal prompt id).
template <class T>
class TargetCache {
 public:
  void insert(const std::string& image_id, const std::string& prompt_id, Tensor<T> edit) {
    entries_.insert_or_assign({image_id, prompt_id}, ad::Var<T>::constant(std::move(edit)));
  }

  const ad::Var<T>& at(const std::string& image_id, const std::string& prompt_id) const {
    auto it = entries_.find({image_id, prompt_id});
    if (it == entries_.end())
      throw Error(ErrorKind::MissingParent, "no cached target for image '" + image_id + "', prompt '" + prompt_id + "'");
    return it->second;
  }
  bool contains(const std::string& image_id, const std::string& prompt_id) const {
    return entries_.count({image_id, prompt_id}) > 0;
  }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::map<std::pair<std::string, std::string>, ad::Var<T>>& entries() const { return entries_; }

 private:
  std::map<std::pair<std::string, std::string>, ad::Var<T>> entries_;
};

namespace detail {

inline std::vector<const Prompt*> sorted_by_id(const std::vector<Prompt>& ps) {
  std::vector<const Prompt*> out;
  for (const auto& p : ps) out.push_back(&p);
  std::stable_sort(out.begin(), out.end(), [](const Prompt* a, const Prompt* b) { return a->id < b->id; });
  return out;
}

inline void check_parents(const PromptSet& prompts) {
  for (const auto& m : prompts.maliciouses)
    if (!m.parent_id || !prompts.find_normal(*m.parent_id))
      throw Error(ErrorKind::MissingParent, "malicious prompt " + m.id + " has no parent in the prompt set");
}

}  // namespace detail

/// One entry per normal prompt; every malicious parent must be among them.
template <class T, class Editor>
TargetCache<T> build_target_cache(const ad::Var<T>& img, const PromptSet& prompts, const Editor& editor,
                                  const EditorConfig& cfg, const std::string& image_id = "") {
  detail::check_parents(prompts);
  TargetCache<T> cache;
  auto x = ad::detach(img);
  for (const Prompt* p : detail::sorted_by_id(prompts.normals))
    cache.insert(image_id, p->id, editor.edit(x, *p, cfg).value());
  return cache;
}

template <class T, class Editor>
TargetCache<T> build_target_cache(const Image& img, const PromptSet& prompts, const Editor& editor,
                                  const EditorConfig& cfg, const std::string& image_id = "") {
  return build_target_cache(ad::Var<T>::constant(validate_image(img).data.template cast<T>()), prompts, editor, cfg,
                            image_id);
}

/// clamp(x + delta, 0, 1) as a differentiable node.
template <class T>
ad::Var<T> perturbed(const ad::Var<T>& x, const ad::Var<T>& delta) {
  return ad::clamp(ad::add(x, delta), T{0}, T{1});
}

template <class T, class Editor>
ad::Var<T> adv_loss(const ad::Var<T>& x_pert, const PromptSet& prompts, const TargetCache<T>& cache,
                    const Editor& editor, const EditorConfig& cfg, const std::string& image_id = "",
                    const ImageMetric<T>& metric = mse_metric<T>()) {
  detail::check_parents(prompts);
  ad::Var<T> total = ad::Var<T>::constant(Tensor<T>::scalar(T{0}));
  for (const Prompt* p : detail::sorted_by_id(prompts.maliciouses)) {
    const auto& target = cache.at(image_id, *p->parent_id);
    total = ad::add(total, metric(editor.edit(x_pert, *p, cfg), target));
  }
  return total;
}

template <class T, class Editor>
ad::Var<T> reg_loss(const ad::Var<T>& x_pert, const PromptSet& prompts, const TargetCache<T>& cache,
                    const Editor& editor, const EditorConfig& cfg, const std::string& image_id = "",
                    const ImageMetric<T>& metric = mse_metric<T>()) {
  ad::Var<T> total = ad::Var<T>::constant(Tensor<T>::scalar(T{0}));
  for (const Prompt* p : detail::sorted_by_id(prompts.normals)) {
    const auto& target = cache.at(image_id, p->id);
    total = ad::add(total, metric(editor.edit(x_pert, *p, cfg), target));
  }
  return total;
}

template <class T>
ad::Var<T> total_loss(const ad::Var<T>& adv, const ad::Var<T>& reg, const LossWeights& w) {
  return ad::add(ad::scale(adv, static_cast<T>(w.lambda1)), ad::scale(reg, static_cast<T>(w.lambda2)));
}

inline double total_loss(double adv, double reg, const LossWeights& w) { return w.lambda1 * adv + w.lambda2 * reg; }

/// Value-level convenience over Image / Perturbation.
template <class Editor>
double adv_loss(const Image& x, const Perturbation& delta, const PromptSet& prompts, const TargetCache<float>& cache,
                const Editor& editor, const EditorConfig& cfg, const std::string& image_id = "") {
  auto xp = ad::Var<float>::constant(apply_perturbation(validate_image(x), delta).data);
  return adv_loss(xp, prompts, cache, editor, cfg, image_id).value().item();
}

template <class Editor>
double reg_loss(const Image& x, const Perturbation& delta, const PromptSet& prompts, const TargetCache<float>& cache,
                const Editor& editor, const EditorConfig& cfg, const std::string& image_id = "") {
  auto xp = ad::Var<float>::constant(apply_perturbation(validate_image(x), delta).data);
  return reg_loss(xp, prompts, cache, editor, cfg, image_id).value().item();
}

}  // namespace tarpro

#endif  // TARPRO_OBJECTIVE_HPP
