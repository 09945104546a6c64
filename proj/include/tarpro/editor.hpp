#ifndef TARPRO_EDITOR_HPP
#define TARPRO_EDITOR_HPP

// Differentiable toy editor g(x, y) = decode(sample(encode(x), y)) and the
// toy NSFW scorer acting as the safety checker.
//
// encode:  per-patch linear map, (C,H,W) -> (latent_channels, H/f, W/f)
// sample:  S residual updates z += a_k * V (tanh(Wz + Up + b) - tanh(Wz + b)),
//          applied independently at every latent position. The prompt enters
//          only through Up, so the zero embedding leaves z untouched.
// decode:  per-patch affine map followed by a sigmoid.

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tarpro/autodiff.hpp"
#include "tarpro/core_types.hpp"
#include "tarpro/io.hpp"

namespace tarpro {

struct EditorConfig {
  int sampler_steps = 4;
  Seed seed{};

  void validate() const {
    if (sampler_steps < 1) throw Error(ErrorKind::InvalidArgument, "sampler_steps must be >= 1");
  }
};

/// Latent grid stored position-major: tokens is (grid_h*grid_w, channels).
template <class T>
struct LatentTensor {
  ad::Var<T> tokens;
  std::size_t channels = 0;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;

  Shape shape() const { return Shape{channels, grid_h, grid_w}; }

  /// (channels, grid_h, grid_w) copy of the values.
  Tensor<T> to_chw() const {
    Tensor<T> out(shape());
    const auto& v = tokens.value();
    for (std::size_t p = 0; p < grid_h * grid_w; ++p)
      for (std::size_t c = 0; c < channels; ++c) out[c * grid_h * grid_w + p] = v[p * channels + c];
    return out;
  }
};

/// Per-call instrumentation for the sampler.
struct SampleTrace {
  int updates = 0;
};

template <class T>
inline std::vector<T> sampler_schedule(int steps) {
  std::vector<T> a(static_cast<std::size_t>(steps));
  const T denom = static_cast<T>(steps) * static_cast<T>(steps + 1) / T{2};
  for (int k = 0; k < steps; ++k) a[static_cast<std::size_t>(k)] = static_cast<T>(steps - k) / denom;
  return a;
}

template <class T>
struct EditorWeights {
  Tensor<T> enc_w;  // (latent_channels, C*f*f)
  Tensor<T> enc_b;  // (latent_channels)
  Tensor<T> smp_w;  // (hidden, latent_channels)
  Tensor<T> smp_u;  // (hidden, prompt_dim)
  Tensor<T> smp_b;  // (hidden)
  Tensor<T> smp_v;  // (latent_channels, hidden)
  Tensor<T> dec_w;  // (C*f*f, latent_channels)
  Tensor<T> dec_b;  // (C*f*f)

  template <class U>
  EditorWeights<U> cast() const {
    return {enc_w.template cast<U>(), enc_b.template cast<U>(), smp_w.template cast<U>(), smp_u.template cast<U>(),
            smp_b.template cast<U>(), smp_v.template cast<U>(), dec_w.template cast<U>(), dec_b.template cast<U>()};
  }
};

struct EditorShape {
  std::size_t image_channels = 3;
  std::size_t latent_downsample = 8;
  std::size_t latent_channels = 16;
  std::size_t prompt_dim = kDefaultPromptDim;
  int sampler_steps_default = 4;
};

template <class T>
class ToyEditor {
 public:
  ToyEditor() = default;
  ToyEditor(EditorShape shape, EditorWeights<T> w) : shape_(shape), w_(std::move(w)) { bind(); }

  const EditorShape& shape() const { return shape_; }
  const EditorWeights<T>& weights() const { return w_; }
  std::size_t patch_dim() const { return shape_.image_channels * shape_.latent_downsample * shape_.latent_downsample; }

  LatentTensor<T> encode(const ad::Var<T>& img) const {
    check_image_shape(img.shape());
    const std::size_t f = shape_.latent_downsample;
    auto patches = ad::patchify(img, f);
    auto z = ad::add_rowvec(ad::matmul_nt(patches, enc_w_), enc_b_);
    return {z, shape_.latent_channels, img.shape()[1] / f, img.shape()[2] / f};
  }

  LatentTensor<T> sample(const LatentTensor<T>& latent, const Prompt& prompt, const EditorConfig& cfg,
                         SampleTrace* trace = nullptr) const {
    cfg.validate();
    if (prompt.embedding.size() != shape_.prompt_dim)
      throw Error(ErrorKind::DimMismatch, "prompt embedding has dimension " + std::to_string(prompt.embedding.size()) +
                                              ", editor expects " + std::to_string(shape_.prompt_dim));
    if (latent.channels != shape_.latent_channels)
      throw Error(ErrorKind::BadShape, "latent channel count does not match editor");
    const std::size_t hidden = w_.smp_b.size();
    Tensor<T> up(Shape{hidden});
    for (std::size_t h = 0; h < hidden; ++h) {
      T s{0};
      for (std::size_t j = 0; j < shape_.prompt_dim; ++j)
        s += w_.smp_u[h * shape_.prompt_dim + j] * static_cast<T>(prompt.embedding[j]);
      up[h] = s;
    }
    auto up_var = ad::Var<T>::constant(std::move(up));
    const auto schedule = sampler_schedule<T>(cfg.sampler_steps);
    ad::Var<T> z = latent.tokens;
    for (int k = 0; k < cfg.sampler_steps; ++k) {
      auto base = ad::add_rowvec(ad::matmul_nt(z, smp_w_), smp_b_);
      auto cond = ad::add_rowvec(base, up_var);
      auto act = ad::sub(ad::tanh(cond), ad::tanh(base));
      z = ad::add(z, ad::scale(ad::matmul_nt(act, smp_v_), schedule[static_cast<std::size_t>(k)]));
      if (trace) ++trace->updates;
    }
    return {z, latent.channels, latent.grid_h, latent.grid_w};
  }

  ad::Var<T> decode(const LatentTensor<T>& latent) const {
    if (latent.channels != shape_.latent_channels || latent.tokens.shape().size() != 2 ||
        latent.tokens.shape()[0] != latent.grid_h * latent.grid_w || latent.tokens.shape()[1] != latent.channels)
      throw Error(ErrorKind::BadShape, "latent layout does not match editor configuration");
    const std::size_t f = shape_.latent_downsample;
    auto logits = ad::add_rowvec(ad::matmul_nt(latent.tokens, dec_w_), dec_b_);
    return ad::unpatchify(ad::sigmoid(logits), shape_.image_channels, latent.grid_h * f, latent.grid_w * f, f);
  }

  ad::Var<T> edit(const ad::Var<T>& img, const Prompt& prompt, const EditorConfig& cfg) const {
    return decode(sample(encode(img), prompt, cfg));
  }

  /// Autoencoder reconstruction loss, the editor's own training objective.
  ad::Var<T> reconstruction_loss(const ad::Var<T>& img) const { return ad::mse(decode(encode(img)), img); }

  Image edit(const Image& img, const Prompt& prompt, const EditorConfig& cfg) const {
    auto out = edit(ad::Var<T>::constant(validate_image(img).data.template cast<T>()), prompt, cfg);
    return to_image(out.value());
  }
  Image reconstruct(const Image& img) const {
    auto out = decode(encode(ad::Var<T>::constant(validate_image(img).data.template cast<T>())));
    return to_image(out.value());
  }

  template <class U>
  ToyEditor<U> cast() const {
    return ToyEditor<U>(shape_, w_.template cast<U>());
  }

  void store(io::TensorContainer& c) const {
    c.put_scalar("config.image_channels", static_cast<float>(shape_.image_channels));
    c.put_scalar("config.latent_downsample", static_cast<float>(shape_.latent_downsample));
    c.put_scalar("config.latent_channels", static_cast<float>(shape_.latent_channels));
    c.put_scalar("config.prompt_dim", static_cast<float>(shape_.prompt_dim));
    c.put_scalar("config.sampler_steps_default", static_cast<float>(shape_.sampler_steps_default));
    c.put("encoder.weight", w_.enc_w.template cast<float>());
    c.put("encoder.bias", w_.enc_b.template cast<float>());
    c.put("sampler.W", w_.smp_w.template cast<float>());
    c.put("sampler.U", w_.smp_u.template cast<float>());
    c.put("sampler.b", w_.smp_b.template cast<float>());
    c.put("sampler.V", w_.smp_v.template cast<float>());
    c.put("decoder.weight", w_.dec_w.template cast<float>());
    c.put("decoder.bias", w_.dec_b.template cast<float>());
  }

  /// Hash of all weights; used to prove the editor stays frozen.
  std::uint64_t checksum() const {
    io::TensorContainer c;
    store(c);
    return io::checksum(c);
  }

  static ToyEditor load(const io::TensorContainer& c) {
    EditorShape s;
    s.image_channels = static_cast<std::size_t>(c.get_scalar("config.image_channels"));
    s.latent_downsample = static_cast<std::size_t>(c.get_scalar("config.latent_downsample"));
    s.latent_channels = static_cast<std::size_t>(c.get_scalar("config.latent_channels"));
    s.prompt_dim = static_cast<std::size_t>(c.get_scalar("config.prompt_dim"));
    s.sampler_steps_default = static_cast<int>(c.get_scalar("config.sampler_steps_default"));
    EditorWeights<T> w{c.get("encoder.weight").template cast<T>(), c.get("encoder.bias").template cast<T>(),
                       c.get("sampler.W").template cast<T>(),      c.get("sampler.U").template cast<T>(),
                       c.get("sampler.b").template cast<T>(),      c.get("sampler.V").template cast<T>(),
                       c.get("decoder.weight").template cast<T>(), c.get("decoder.bias").template cast<T>()};
    return ToyEditor(s, std::move(w));
  }

 private:
  void bind() {
    enc_w_ = ad::Var<T>::constant(w_.enc_w);
    enc_b_ = ad::Var<T>::constant(w_.enc_b);
    smp_w_ = ad::Var<T>::constant(w_.smp_w);
    smp_b_ = ad::Var<T>::constant(w_.smp_b);
    smp_v_ = ad::Var<T>::constant(w_.smp_v);
    dec_w_ = ad::Var<T>::constant(w_.dec_w);
    dec_b_ = ad::Var<T>::constant(w_.dec_b);
  }

  void check_image_shape(const Shape& s) const {
    if (s.size() != 3 || s[0] != shape_.image_channels)
      throw Error(ErrorKind::BadShape, "editor expects " + std::to_string(shape_.image_channels) + " channels, got " +
                                           shape_str(s));
    const std::size_t f = shape_.latent_downsample;
    if (s[1] == 0 || s[2] == 0 || s[1] % f || s[2] % f)
      throw Error(ErrorKind::BadShape, "H and W must be divisible by latent_downsample " + std::to_string(f));
  }

  static Image to_image(const Tensor<T>& t) {
    Tensor<float> f = t.template cast<float>();
    for (auto& v : f.vec()) v = std::clamp(v, 0.0f, 1.0f);
    return Image(std::move(f));
  }

  EditorShape shape_;
  EditorWeights<T> w_;
  ad::Var<T> enc_w_, enc_b_, smp_w_, smp_b_, smp_v_, dec_w_, dec_b_;
};

/// parent.embedding + strength * direction, tagged malicious.
inline Prompt make_malicious(const Prompt& parent, const std::vector<float>& nsfw_direction, float strength,
                             std::string id = {}) {
  if (parent.kind != PromptKind::normal) throw Error(ErrorKind::BadParent, "parent prompt must be normal");
  if (nsfw_direction.size() != parent.embedding.size())
    throw Error(ErrorKind::BadDirection, "direction dimension does not match prompt embedding");
  double norm2 = 0.0;
  for (float v : nsfw_direction) norm2 += static_cast<double>(v) * v;
  if (std::abs(std::sqrt(norm2) - 1.0) > 1e-4) throw Error(ErrorKind::BadDirection, "direction must have unit norm");
  if (!(strength > 0.0f)) throw Error(ErrorKind::InvalidArgument, "strength must be positive");
  Prompt p;
  p.id = id.empty() ? parent.id + "+nsfw" : std::move(id);
  p.kind = PromptKind::malicious;
  p.parent_id = parent.id;
  p.embedding.resize(parent.embedding.size());
  for (std::size_t i = 0; i < p.embedding.size(); ++i) p.embedding[i] = parent.embedding[i] + strength * nsfw_direction[i];
  return p;
}

template <class T>
struct ScorerWeights {
  Tensor<T> filters;  // (K, C*f*f)
  Tensor<T> filter_bias;  // (K)
  Tensor<T> mix;  // (K)
  Tensor<T> offset;  // scalar
};

/// Safety-checker stand-in: patch filters -> squared responses -> max over
/// patches -> sigmoid.
template <class T>
class NsfwScorer {
 public:
  NsfwScorer() = default;
  NsfwScorer(std::size_t image_channels, std::size_t patch, ScorerWeights<T> w, T threshold = T(0.5))
      : channels_(image_channels), patch_(patch), threshold_(threshold), w_(std::move(w)) {
    bind_constants();
  }

  T threshold() const { return threshold_; }
  std::size_t patch() const { return patch_; }
  const ScorerWeights<T>& weights() const { return w_; }

  /// Scorer parameters as trainable leaves (used by the toy-world recipe).
  std::vector<ad::Var<T>> make_trainable() {
    filters_ = ad::Var<T>::parameter(w_.filters);
    fbias_ = ad::Var<T>::parameter(w_.filter_bias);
    mix_ = ad::Var<T>::parameter(w_.mix);
    offset_ = ad::Var<T>::parameter(w_.offset);
    return {filters_, fbias_, mix_, offset_};
  }
  /// Copies trained leaf values back and detaches them.
  void freeze() {
    w_ = {filters_.value(), fbias_.value(), mix_.value(), offset_.value()};
    bind_constants();
  }

  ad::Var<T> logit(const ad::Var<T>& img) const {
    auto patches = ad::patchify(img, patch_);
    auto resp = ad::square(ad::add_rowvec(ad::matmul_nt(patches, filters_), fbias_));
    const std::size_t K = w_.mix.size();
    auto energy = ad::matmul(resp, ad::reshape(mix_, Shape{K, 1}));
    return ad::add(ad::reshape(ad::max_all(energy), Shape{}), ad::reshape(offset_, Shape{}));
  }
  ad::Var<T> score(const ad::Var<T>& img) const { return ad::sigmoid(logit(img)); }

  /// Score in [0,1] for a validated image.
  T score(const Image& img) const {
    validate_image(img);
    if (img.channels() != channels_ || img.height() % patch_ || img.width() % patch_)
      throw Error(ErrorKind::BadShape, "scorer cannot read image of shape " + shape_str(img.shape()));
    return score(ad::Var<T>::constant(img.data.template cast<T>())).value().item();
  }
  /// Ties at the threshold are not flagged.
  bool flagged(T s) const { return s > threshold_; }
  bool flagged(const Image& img) const { return flagged(score(img)); }

  void store(io::TensorContainer& c) const {
    c.put("scorer.filters", w_.filters.template cast<float>());
    c.put("scorer.filter_bias", w_.filter_bias.template cast<float>());
    c.put("scorer.mix", w_.mix.template cast<float>());
    c.put("scorer.offset", w_.offset.template cast<float>());
    c.put_scalar("scorer.threshold", static_cast<float>(threshold_));
    c.put_scalar("scorer.patch", static_cast<float>(patch_));
    c.put_scalar("scorer.channels", static_cast<float>(channels_));
  }
  static NsfwScorer load(const io::TensorContainer& c) {
    ScorerWeights<T> w{c.get("scorer.filters").template cast<T>(), c.get("scorer.filter_bias").template cast<T>(),
                       c.get("scorer.mix").template cast<T>(), c.get("scorer.offset").template cast<T>()};
    return NsfwScorer(static_cast<std::size_t>(c.get_scalar("scorer.channels")),
                      static_cast<std::size_t>(c.get_scalar("scorer.patch")), std::move(w),
                      static_cast<T>(c.get_scalar("scorer.threshold")));
  }

 private:
  void bind_constants() {
    filters_ = ad::Var<T>::constant(w_.filters);
    fbias_ = ad::Var<T>::constant(w_.filter_bias);
    mix_ = ad::Var<T>::constant(w_.mix);
    offset_ = ad::Var<T>::constant(w_.offset);
  }

  std::size_t channels_ = 3;
  std::size_t patch_ = 8;
  T threshold_ = T(0.5);
  ScorerWeights<T> w_;
  ad::Var<T> filters_, fbias_, mix_, offset_;
};

}  // namespace tarpro

#endif  // TARPRO_EDITOR_HPP
