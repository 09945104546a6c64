#ifndef TARPRO_CORE_TYPES_HPP
#define TARPRO_CORE_TYPES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tarpro/tensor.hpp"

namespace tarpro {

enum class ErrorKind {
  OutOfRange,
  BadShape,
  ShapeMismatch,
  DimMismatch,
  NonFinite,
  BadParent,
  BadDirection,
  MissingParent,
  MissingTarget,
  TooSmall,
  EmptyInput,
  NonFiniteLoss,
  IncompatibleShapes,
  LoadError,
  WriteError,
  MethodConfigMismatch,
  VersionMismatch,
  InvalidArgument,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::BadShape: return "BadShape";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::BadParent: return "BadParent";
    case ErrorKind::BadDirection: return "BadDirection";
    case ErrorKind::MissingParent: return "MissingParent";
    case ErrorKind::MissingTarget: return "MissingTarget";
    case ErrorKind::TooSmall: return "TooSmall";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::IncompatibleShapes: return "IncompatibleShapes";
    case ErrorKind::LoadError: return "LoadError";
    case ErrorKind::WriteError: return "WriteError";
    case ErrorKind::MethodConfigMismatch: return "MethodConfigMismatch";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(std::string(to_string(kind)) + ": " + msg), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// ---------------------------------------------------------------- randomness

struct Seed {
  std::uint64_t value = 0;
  friend bool operator==(Seed, Seed) = default;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent child seed for a named stream.
inline Seed derive(Seed s, std::uint64_t stream) { return Seed{splitmix64(s.value ^ splitmix64(stream))}; }

/// mt19937_64 with distribution code written out here so sequences do not
/// depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(Seed s) : eng_(s.value) {}

  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  std::uint64_t next_u64() { return eng_(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform01() * static_cast<double>(n)) % n; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do u1 = uniform01(); while (u1 <= 0.0);
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  /// Normal(0, std) resampled until within two standard deviations.
  double trunc_normal(double std) {
    for (;;) {
      const double z = normal();
      if (std::abs(z) <= 2.0) return z * std;
    }
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------- images

enum class ColorSpace { grayscale, rgb };

/// C x H x W intensities in [0,1].
struct Image {
  Tensor<float> data;
  ColorSpace color_space = ColorSpace::rgb;

  Image() = default;
  explicit Image(Tensor<float> d)
      : data(std::move(d)), color_space(data.rank() == 3 && data.dim(0) == 1 ? ColorSpace::grayscale : ColorSpace::rgb) {}

  static Image filled(std::size_t c, std::size_t h, std::size_t w, float v) {
    return Image(Tensor<float>(Shape{c, h, w}, v));
  }

  std::size_t channels() const { return data.dim(0); }
  std::size_t height() const { return data.dim(1); }
  std::size_t width() const { return data.dim(2); }
  const Shape& shape() const { return data.shape(); }

  friend bool operator==(const Image& a, const Image& b) { return a.data == b.data; }
};

inline constexpr float kDefaultEta = 8.0f / 255.0f;
inline constexpr float kBudgetSlack = 1e-6f;

struct PerturbationBudget {
  float eta = kDefaultEta;

  static PerturbationBudget make(float eta) {
    if (!(eta > 0.0f && eta < 1.0f)) throw Error(ErrorKind::OutOfRange, "budget eta must lie in (0,1)");
    return PerturbationBudget{eta};
  }
};

struct Perturbation {
  Tensor<float> data;
  PerturbationBudget budget;

  /// Enforces the infinity-norm invariant.
  static Perturbation make(Tensor<float> d, PerturbationBudget b) {
    if (!d.all_finite()) throw Error(ErrorKind::NonFinite, "perturbation contains non-finite values");
    if (d.max_abs() > b.eta + kBudgetSlack)
      throw Error(ErrorKind::OutOfRange, "perturbation exceeds budget");
    return Perturbation{std::move(d), b};
  }
  static Perturbation zeros(const Shape& s, PerturbationBudget b = {}) { return Perturbation{Tensor<float>(s), b}; }
};

inline Image validate_image(const Image& img) {
  if (img.data.rank() != 3) throw Error(ErrorKind::BadShape, "image must have shape (C,H,W)");
  for (auto d : img.data.shape())
    if (d == 0) throw Error(ErrorKind::BadShape, "image has a zero-sized dimension " + shape_str(img.shape()));
  for (float v : img.data.vec())
    if (!(v >= 0.0f && v <= 1.0f)) throw Error(ErrorKind::OutOfRange, "pixel outside [0,1]");
  return img;
}

/// clamp(img + pert, 0, 1)
inline Image apply_perturbation(const Image& img, const Perturbation& pert) {
  if (img.shape() != pert.data.shape())
    throw Error(ErrorKind::ShapeMismatch,
                "image " + shape_str(img.shape()) + " vs perturbation " + shape_str(pert.data.shape()));
  Tensor<float> out = img.data;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i] + pert.data[i], 0.0f, 1.0f);
  Image r(std::move(out));
  r.color_space = img.color_space;
  return r;
}

// ---------------------------------------------------------------- prompts

inline constexpr std::size_t kDefaultPromptDim = 32;

enum class PromptKind { normal, malicious };

struct Prompt {
  std::string id;
  PromptKind kind = PromptKind::normal;
  std::vector<float> embedding;
  std::optional<std::string> parent_id;

  bool is_null() const {
    return std::all_of(embedding.begin(), embedding.end(), [](float v) { return v == 0.0f; });
  }
};

inline Prompt null_prompt(std::size_t dim = kDefaultPromptDim) {
  return Prompt{"null", PromptKind::normal, std::vector<float>(dim, 0.0f), std::nullopt};
}

/// Normal prompts and their NSFW-augmented children.
struct PromptSet {
  std::vector<Prompt> normals;
  std::vector<Prompt> maliciouses;

  std::size_t I() const { return maliciouses.size(); }
  std::size_t N() const { return normals.size(); }
  bool empty() const { return normals.empty() && maliciouses.empty(); }

  const Prompt* find_normal(const std::string& id) const {
    for (const auto& p : normals)
      if (p.id == id) return &p;
    return nullptr;
  }

  /// Throws MissingParent / DimMismatch / NonFinite / BadParent.
  void validate() const {
    std::optional<std::size_t> dim;
    auto check = [&](const Prompt& p) {
      if (!dim) dim = p.embedding.size();
      if (p.embedding.size() != *dim) throw Error(ErrorKind::DimMismatch, "prompt " + p.id + " has wrong dimension");
      for (float v : p.embedding)
        if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "prompt " + p.id + " has non-finite embedding");
    };
    for (const auto& p : normals) {
      check(p);
      if (p.kind != PromptKind::normal || p.parent_id)
        throw Error(ErrorKind::BadParent, "normal prompt " + p.id + " must not have a parent");
    }
    for (const auto& p : maliciouses) {
      check(p);
      if (p.kind != PromptKind::malicious || !p.parent_id)
        throw Error(ErrorKind::BadParent, "malicious prompt " + p.id + " needs a parent");
      if (!find_normal(*p.parent_id))
        throw Error(ErrorKind::MissingParent, "malicious prompt " + p.id + " refers to unknown parent " + *p.parent_id);
    }
  }
};

}  // namespace tarpro

#endif  // TARPRO_CORE_TYPES_HPP
