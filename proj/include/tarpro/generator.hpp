#ifndef TARPRO_GENERATOR_HPP
#define TARPRO_GENERATOR_HPP

// Perturbation generator: patchify -> linear patch embedding + learned
// positions -> pre-norm transformer blocks -> linear unpatch -> unpatchify,
// followed by the tanh budget projection delta = tanh(delta_init) * eta.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "tarpro/autodiff.hpp"
#include "tarpro/core_types.hpp"
#include "tarpro/io.hpp"

namespace tarpro {

struct GeneratorConfig {
  std::size_t patch_size = 8;
  std::size_t hidden_dim = 384;
  std::size_t num_heads = 8;
  std::size_t num_blocks = 1;
  std::size_t mlp_ratio = 4;
  std::size_t channels = 3;
  std::size_t height = 64;
  std::size_t width = 64;
  double init_std = 0.02;

  std::size_t patch_dim() const { return channels * patch_size * patch_size; }
  std::size_t num_tokens() const { return (height / patch_size) * (width / patch_size); }

  void validate() const {
    if (patch_size == 0 || hidden_dim == 0 || num_heads == 0 || num_blocks == 0 || mlp_ratio == 0 || channels == 0)
      throw Error(ErrorKind::InvalidArgument, "generator sizes must be positive");
    if (hidden_dim % num_heads) throw Error(ErrorKind::InvalidArgument, "hidden_dim must be divisible by num_heads");
    if (height == 0 || width == 0 || height % patch_size || width % patch_size)
      throw Error(ErrorKind::BadShape, "generator resolution must be divisible by patch_size");
  }

  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

inline void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = {{"patch_size", c.patch_size}, {"hidden_dim", c.hidden_dim}, {"num_heads", c.num_heads},
       {"num_blocks", c.num_blocks}, {"mlp_ratio", c.mlp_ratio},   {"channels", c.channels},
       {"height", c.height},         {"width", c.width},           {"init_std", c.init_std}};
}
inline void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  GeneratorConfig d;
  c.patch_size = j.value("patch_size", d.patch_size);
  c.hidden_dim = j.value("hidden_dim", d.hidden_dim);
  c.num_heads = j.value("num_heads", d.num_heads);
  c.num_blocks = j.value("num_blocks", d.num_blocks);
  c.mlp_ratio = j.value("mlp_ratio", d.mlp_ratio);
  c.channels = j.value("channels", d.channels);
  c.height = j.value("height", d.height);
  c.width = j.value("width", d.width);
  c.init_std = j.value("init_std", d.init_std);
}

template <class T>
struct BlockParams {
  ad::Var<T> ln1_g, ln1_b, qkv_w, qkv_b, proj_w, proj_b;
  ad::Var<T> ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;

  std::vector<std::pair<std::string, ad::Var<T>>> named(const std::string& prefix) const {
    return {{prefix + "ln1.gamma", ln1_g}, {prefix + "ln1.beta", ln1_b}, {prefix + "attn.qkv.weight", qkv_w},
            {prefix + "attn.qkv.bias", qkv_b}, {prefix + "attn.proj.weight", proj_w}, {prefix + "attn.proj.bias", proj_b},
            {prefix + "ln2.gamma", ln2_g}, {prefix + "ln2.beta", ln2_b}, {prefix + "mlp.fc1.weight", fc1_w},
            {prefix + "mlp.fc1.bias", fc1_b}, {prefix + "mlp.fc2.weight", fc2_w}, {prefix + "mlp.fc2.bias", fc2_b}};
  }
};

/// Generator weights as trainable leaves. Weights are stored (out, in).
/// Copies share leaves; use clone() for an independent copy.
template <class T>
struct GeneratorParams {
  GeneratorConfig config;
  ad::Var<T> embed_w, embed_b, pos;
  std::vector<BlockParams<T>> blocks;
  ad::Var<T> unpatch_w, unpatch_b;

  /// Truncated-normal projections, zero biases, unit LayerNorm gains.
  static GeneratorParams init(const GeneratorConfig& cfg, Seed seed) {
    cfg.validate();
    Rng rng(derive(seed, 0x67656e));
    auto tn = [&](Shape s) {
      Tensor<T> t(std::move(s));
      for (auto& v : t.vec()) v = static_cast<T>(rng.trunc_normal(cfg.init_std));
      return ad::Var<T>::parameter(std::move(t));
    };
    auto zeros = [](Shape s) { return ad::Var<T>::parameter(Tensor<T>(std::move(s))); };
    auto ones = [](Shape s) { return ad::Var<T>::parameter(Tensor<T>(std::move(s), T{1})); };
    const std::size_t h = cfg.hidden_dim, d = cfg.patch_dim(), m = cfg.mlp_ratio * h;
    GeneratorParams p;
    p.config = cfg;
    p.embed_w = tn({h, d});
    p.embed_b = zeros({h});
    p.pos = tn({cfg.num_tokens(), h});
    for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
      BlockParams<T> bp;
      bp.ln1_g = ones({h});
      bp.ln1_b = zeros({h});
      bp.qkv_w = tn({3 * h, h});
      bp.qkv_b = zeros({3 * h});
      bp.proj_w = tn({h, h});
      bp.proj_b = zeros({h});
      bp.ln2_g = ones({h});
      bp.ln2_b = zeros({h});
      bp.fc1_w = tn({m, h});
      bp.fc1_b = zeros({m});
      bp.fc2_w = tn({h, m});
      bp.fc2_b = zeros({h});
      p.blocks.push_back(std::move(bp));
    }
    p.unpatch_w = tn({d, h});
    p.unpatch_b = zeros({d});
    return p;
  }

  std::vector<std::pair<std::string, ad::Var<T>>> named() const {
    std::vector<std::pair<std::string, ad::Var<T>>> out{
        {"patch_embed.weight", embed_w}, {"patch_embed.bias", embed_b}, {"pos_embed", pos}};
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      auto nb = blocks[b].named("blocks." + std::to_string(b) + ".");
      out.insert(out.end(), nb.begin(), nb.end());
    }
    out.emplace_back("unpatch.weight", unpatch_w);
    out.emplace_back("unpatch.bias", unpatch_b);
    return out;
  }

  std::vector<ad::Var<T>> parameters() const {
    std::vector<ad::Var<T>> out;
    for (auto& [n, v] : named()) out.push_back(v);
    return out;
  }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (auto& [name, v] : named()) n += v.size();
    return n;
  }

  void zero_grad() {
    for (auto& v : parameters()) v.zero_grad();
  }

  io::TensorContainer to_container() const {
    io::TensorContainer c;
    c.put_scalar("config.patch_size", static_cast<float>(config.patch_size));
    c.put_scalar("config.hidden_dim", static_cast<float>(config.hidden_dim));
    c.put_scalar("config.num_heads", static_cast<float>(config.num_heads));
    c.put_scalar("config.num_blocks", static_cast<float>(config.num_blocks));
    c.put_scalar("config.mlp_ratio", static_cast<float>(config.mlp_ratio));
    c.put_scalar("config.channels", static_cast<float>(config.channels));
    c.put_scalar("config.height", static_cast<float>(config.height));
    c.put_scalar("config.width", static_cast<float>(config.width));
    for (auto& [n, v] : named()) c.put(n, v.value().template cast<float>());
    return c;
  }

  static GeneratorParams from_container(const io::TensorContainer& c) {
    GeneratorConfig cfg;
    auto sz = [&](const char* n) { return static_cast<std::size_t>(c.get_scalar(n)); };
    cfg.patch_size = sz("config.patch_size");
    cfg.hidden_dim = sz("config.hidden_dim");
    cfg.num_heads = sz("config.num_heads");
    cfg.num_blocks = sz("config.num_blocks");
    cfg.mlp_ratio = sz("config.mlp_ratio");
    cfg.channels = sz("config.channels");
    cfg.height = sz("config.height");
    cfg.width = sz("config.width");
    GeneratorParams p = init(cfg, Seed{0});
    for (auto& [n, v] : p.named()) {
      const auto& t = c.get(n);
      if (t.shape() != v.shape()) throw Error(ErrorKind::LoadError, "tensor " + n + " has unexpected shape");
      v.mutable_value() = t.template cast<T>();
    }
    return p;
  }

  void save(const io::fs::path& path) const { to_container().write(path, io::kGeneratorMagic); }
  static GeneratorParams load(const io::fs::path& path) {
    return from_container(io::TensorContainer::read(path, io::kGeneratorMagic));
  }

  /// Independent deep copy (fresh leaves, gradients dropped).
  GeneratorParams clone() const { return cast<T>(); }

  template <class U>
  GeneratorParams<U> cast() const {
    GeneratorParams<U> p = GeneratorParams<U>::init(config, Seed{0});
    auto src = named();
    auto dst = p.named();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i].second.mutable_value() = src[i].second.value().template cast<U>();
    return p;
  }
};

// ---------------------------------------------------------------- forward

/// Tokens (num_patches, hidden_dim): linear patch embedding plus positions.
template <class T>
ad::Var<T> embed_patches(const ad::Var<T>& img, const GeneratorParams<T>& p) {
  const auto& c = p.config;
  const auto& s = img.shape();
  if (s.size() != 3 || s[0] != c.channels || s[1] % c.patch_size || s[2] % c.patch_size || s[1] == 0 || s[2] == 0)
    throw Error(ErrorKind::BadShape, "image " + shape_str(s) + " is not divisible into " +
                                         std::to_string(c.patch_size) + "-pixel patches");
  if (s[1] != c.height || s[2] != c.width)
    throw Error(ErrorKind::BadShape, "generator positional embeddings are sized for " + std::to_string(c.height) +
                                         "x" + std::to_string(c.width) + ", got " + shape_str(s));
  auto patches = ad::patchify(img, c.patch_size);
  return ad::add(ad::add_rowvec(ad::matmul_nt(patches, p.embed_w), p.embed_b), p.pos);
}

template <class T>
ad::Var<T> multi_head_attention(const ad::Var<T>& x, const BlockParams<T>& b, std::size_t heads) {
  const std::size_t h = x.shape()[1], dh = h / heads;
  auto qkv = ad::add_rowvec(ad::matmul_nt(x, b.qkv_w), b.qkv_b);
  const T scale = T{1} / std::sqrt(static_cast<T>(dh));
  std::vector<ad::Var<T>> outs;
  for (std::size_t k = 0; k < heads; ++k) {
    auto q = ad::slice_cols(qkv, k * dh, (k + 1) * dh);
    auto kk = ad::slice_cols(qkv, h + k * dh, h + (k + 1) * dh);
    auto v = ad::slice_cols(qkv, 2 * h + k * dh, 2 * h + (k + 1) * dh);
    auto att = ad::softmax_rows(ad::scale(ad::matmul_nt(q, kk), scale));
    outs.push_back(ad::matmul(att, v));
  }
  return ad::add_rowvec(ad::matmul_nt(ad::concat_cols(outs), b.proj_w), b.proj_b);
}

/// Pre-norm block: x + MHA(LN(x)), then x + MLP(LN(x)).
template <class T>
ad::Var<T> transformer_block(const ad::Var<T>& tokens, const BlockParams<T>& b, std::size_t heads) {
  const std::size_t h = b.ln1_g.size();
  if (tokens.shape().size() != 2 || tokens.shape()[1] != h)
    throw Error(ErrorKind::DimMismatch, "token width " + shape_str(tokens.shape()) + " != hidden_dim " + std::to_string(h));
  auto x = ad::add(tokens, multi_head_attention(ad::layernorm_rows(tokens, b.ln1_g, b.ln1_b), b, heads));
  auto hid = ad::gelu(ad::add_rowvec(ad::matmul_nt(ad::layernorm_rows(x, b.ln2_g, b.ln2_b), b.fc1_w), b.fc1_b));
  return ad::add(x, ad::add_rowvec(ad::matmul_nt(hid, b.fc2_w), b.fc2_b));
}

/// Tokens -> (C,H,W) via a linear map back to C*p*p and patch reassembly.
template <class T>
ad::Var<T> unpatch_tokens(const ad::Var<T>& tokens, const GeneratorParams<T>& p) {
  const auto& c = p.config;
  auto pix = ad::add_rowvec(ad::matmul_nt(tokens, p.unpatch_w), p.unpatch_b);
  return ad::unpatchify(pix, c.channels, c.height, c.width, c.patch_size);
}

/// Unconstrained delta_init with the image's shape.
template <class T>
ad::Var<T> generate_raw(const ad::Var<T>& img, const GeneratorParams<T>& p) {
  auto x = embed_patches(img, p);
  for (const auto& b : p.blocks) x = transformer_block(x, b, p.config.num_heads);
  return unpatch_tokens(x, p);
}

template <class T>
ad::Var<T> project(const ad::Var<T>& raw, PerturbationBudget budget) {
  if (!raw.value().all_finite()) throw Error(ErrorKind::NonFinite, "raw perturbation contains NaN or Inf");
  return ad::scale(ad::tanh(raw), static_cast<T>(budget.eta));
}

/// Tensor-level projection producing a validated Perturbation.
inline Perturbation project(const Tensor<float>& raw, PerturbationBudget budget) {
  auto d = project(ad::Var<float>::constant(raw), budget).value();
  // tanh saturates to exactly 1 in float for large inputs; the invariant allows the slack.
  return Perturbation::make(std::move(d), budget);
}

template <class T>
ad::Var<T> generate(const ad::Var<T>& img, const GeneratorParams<T>& p, PerturbationBudget budget) {
  return project(generate_raw(img, p), budget);
}

template <class T>
Perturbation generate(const Image& img, const GeneratorParams<T>& p, PerturbationBudget budget) {
  auto d = generate(ad::Var<T>::constant(validate_image(img).data.template cast<T>()), p, budget);
  return Perturbation::make(d.value().template cast<float>(), budget);
}

}  // namespace tarpro

#endif  // TARPRO_GENERATOR_HPP
