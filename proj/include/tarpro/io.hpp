#ifndef TARPRO_IO_HPP
#define TARPRO_IO_HPP

// File formats: 8-bit PNG images, JSON prompt sets, and the binary tensor
// container used for editor ("TPED") and generator ("TPGN") checkpoints.

#include <png.h>

#include <array>
#include <cfenv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "tarpro/core_types.hpp"

namespace tarpro::io {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- PNG

/// Round-half-to-even quantization to 8 bits.
inline std::uint8_t quantize8(float v) {
  const float s = std::clamp(v, 0.0f, 1.0f) * 255.0f;
  return static_cast<std::uint8_t>(std::nearbyint(s));
}

inline void write_png_bytes(const fs::path& path, std::size_t width, std::size_t height, int channels,
                            const std::vector<std::uint8_t>& interleaved) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!fp) throw Error(ErrorKind::WriteError, "cannot open " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::WriteError, "libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::WriteError, "libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(interleaved.data() + y * width * static_cast<std::size_t>(channels)));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline void save_png(const fs::path& path, const Image& img) {
  validate_image(img);
  const std::size_t C = img.channels(), H = img.height(), W = img.width();
  if (C != 1 && C != 3) throw Error(ErrorKind::BadShape, "PNG export supports 1 or 3 channels");
  std::vector<std::uint8_t> buf(C * H * W);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < C; ++c) buf[(y * W + x) * C + c] = quantize8(img.data.at(c, y, x));
  write_png_bytes(path, W, H, static_cast<int>(C), buf);
}

inline Image load_png(const fs::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "rb"), &std::fclose);
  if (!fp) throw Error(ErrorKind::LoadError, "cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorKind::LoadError, "libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorKind::LoadError, "not a readable PNG: " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  const std::size_t W = png_get_image_width(png, info), H = png_get_image_height(png, info);
  const std::size_t C = png_get_channels(png, info);
  std::vector<std::uint8_t> buf(W * H * C);
  for (std::size_t y = 0; y < H; ++y) png_read_row(png, buf.data() + y * W * C, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  Tensor<float> t(Shape{C, H, W});
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < C; ++c) t.at(c, y, x) = static_cast<float>(buf[(y * W + x) * C + c]) / 255.0f;
  return Image(std::move(t));
}

// ---------------------------------------------------------------- prompt sets

/// A prompt file holds train and eval splits side by side.
struct PromptFile {
  PromptSet train;
  PromptSet eval;
  std::vector<float> nsfw_direction;
};

inline nlohmann::json prompt_to_json(const Prompt& p, const std::string& split) {
  nlohmann::json j;
  j["id"] = p.id;
  j["kind"] = p.kind == PromptKind::normal ? "normal" : "malicious";
  j["embedding"] = p.embedding;
  j["parent_id"] = p.parent_id ? nlohmann::json(*p.parent_id) : nlohmann::json(nullptr);
  j["split"] = split;
  return j;
}

inline void save_prompts(const fs::path& path, const PromptFile& pf) {
  nlohmann::json root;
  root["dimension"] = pf.train.normals.empty() ? 0 : pf.train.normals.front().embedding.size();
  root["nsfw_direction"] = pf.nsfw_direction;
  auto& arr = root["prompts"] = nlohmann::json::array();
  for (const auto* part : {&pf.train, &pf.eval}) {
    const std::string split = part == &pf.train ? "train" : "eval";
    for (const auto& p : part->normals) arr.push_back(prompt_to_json(p, split));
    for (const auto& p : part->maliciouses) arr.push_back(prompt_to_json(p, split));
  }
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::WriteError, "cannot write " + path.string());
  os << root.dump(1) << '\n';
}

/// Accepts either a bare array of prompts or {"prompts": [...]}; a missing
/// "split" field means "train".
inline PromptFile load_prompts(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::LoadError, "cannot open " + path.string());
  PromptFile pf;
  try {
    nlohmann::json root = nlohmann::json::parse(is);
    const nlohmann::json& arr = root.is_array() ? root : root.at("prompts");
    if (root.is_object() && root.contains("nsfw_direction"))
      pf.nsfw_direction = root["nsfw_direction"].get<std::vector<float>>();
    for (const auto& j : arr) {
      Prompt p;
      p.id = j.at("id").get<std::string>();
      const auto kind = j.at("kind").get<std::string>();
      if (kind == "normal") p.kind = PromptKind::normal;
      else if (kind == "malicious") p.kind = PromptKind::malicious;
      else throw Error(ErrorKind::LoadError, "unknown prompt kind " + kind);
      p.embedding = j.at("embedding").get<std::vector<float>>();
      if (j.contains("parent_id") && !j["parent_id"].is_null()) p.parent_id = j["parent_id"].get<std::string>();
      const std::string split = j.value("split", std::string("train"));
      PromptSet& dst = split == "eval" ? pf.eval : pf.train;
      (p.kind == PromptKind::normal ? dst.normals : dst.maliciouses).push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::LoadError, std::string("malformed prompt file: ") + e.what());
  }
  try {
    pf.train.validate();
    pf.eval.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::LoadError, e.what());
  }
  return pf;
}

// ---------------------------------------------------------------- tensor container

inline constexpr std::uint16_t kContainerVersion = 1;

/// Ordered list of named f32 tensors.
class TensorContainer {
 public:
  void put(std::string name, Tensor<float> t) {
    for (auto& [n, v] : entries_)
      if (n == name) {
        v = std::move(t);
        return;
      }
    entries_.emplace_back(std::move(name), std::move(t));
  }
  void put_scalar(std::string name, float v) { put(std::move(name), Tensor<float>::scalar(v)); }

  bool contains(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.first == name) return true;
    return false;
  }
  const Tensor<float>& get(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.first == name) return e.second;
    throw Error(ErrorKind::LoadError, "checkpoint has no tensor named " + name);
  }
  float get_scalar(const std::string& name) const { return get(name).item(); }
  const std::vector<std::pair<std::string, Tensor<float>>>& entries() const { return entries_; }

  std::vector<std::uint8_t> serialize(const std::array<char, 4>& magic) const {
    std::vector<std::uint8_t> out(magic.begin(), magic.end());
    auto u16 = [&](std::uint16_t v) {
      out.push_back(static_cast<std::uint8_t>(v & 0xff));
      out.push_back(static_cast<std::uint8_t>(v >> 8));
    };
    auto u32 = [&](std::uint32_t v) {
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
    };
    u16(kContainerVersion);
    for (const auto& [name, t] : entries_) {
      if (name.size() > 0xffff || t.rank() > 0xff) throw Error(ErrorKind::WriteError, "tensor entry too large");
      u16(static_cast<std::uint16_t>(name.size()));
      out.insert(out.end(), name.begin(), name.end());
      out.push_back(static_cast<std::uint8_t>(t.rank()));
      for (auto d : t.shape()) u32(static_cast<std::uint32_t>(d));
      for (float f : t.vec()) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        u32(bits);
      }
    }
    return out;
  }

  static TensorContainer deserialize(const std::vector<std::uint8_t>& in, const std::array<char, 4>& magic) {
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
      if (pos + n > in.size()) throw Error(ErrorKind::LoadError, "truncated checkpoint");
    };
    auto u16 = [&] {
      need(2);
      std::uint16_t v = static_cast<std::uint16_t>(in[pos] | (in[pos + 1] << 8));
      pos += 2;
      return v;
    };
    auto u32 = [&] {
      need(4);
      std::uint32_t v = 0;
      for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos + i]) << (8 * i);
      pos += 4;
      return v;
    };
    need(4);
    if (!std::equal(magic.begin(), magic.end(), in.begin()))
      throw Error(ErrorKind::LoadError, "bad checkpoint magic");
    pos = 4;
    const auto version = u16();
    if (version != kContainerVersion)
      throw Error(ErrorKind::VersionMismatch, "unsupported checkpoint version " + std::to_string(version));
    TensorContainer c;
    while (pos < in.size()) {
      const auto len = u16();
      need(len);
      std::string name(in.begin() + static_cast<std::ptrdiff_t>(pos), in.begin() + static_cast<std::ptrdiff_t>(pos + len));
      pos += len;
      need(1);
      const std::size_t rank = in[pos++];
      Shape shape(rank);
      for (auto& d : shape) d = u32();
      Tensor<float> t(shape);
      for (auto& f : t.vec()) {
        const std::uint32_t bits = u32();
        std::memcpy(&f, &bits, 4);
      }
      c.entries_.emplace_back(std::move(name), std::move(t));
    }
    return c;
  }

  void write(const fs::path& path, const std::array<char, 4>& magic) const {
    const auto bytes = serialize(magic);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(ErrorKind::WriteError, "cannot write " + path.string());
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }

  static TensorContainer read(const fs::path& path, const std::array<char, 4>& magic) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorKind::LoadError, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return deserialize(bytes, magic);
  }

 private:
  std::vector<std::pair<std::string, Tensor<float>>> entries_;
};

inline constexpr std::array<char, 4> kEditorMagic{'T', 'P', 'E', 'D'};
inline constexpr std::array<char, 4> kGeneratorMagic{'T', 'P', 'G', 'N'};

/// FNV-1a over the raw bytes of every tensor, used to prove weights are untouched.
inline std::uint64_t checksum(const TensorContainer& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 0x100000001b3ULL;
  };
  for (const auto& [name, t] : c.entries()) {
    mix(name.data(), name.size());
    mix(t.data(), t.size() * sizeof(float));
  }
  return h;
}

}  // namespace tarpro::io

#endif  // TARPRO_IO_HPP
