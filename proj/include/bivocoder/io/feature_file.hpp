#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include "bivocoder/model/bivocoder.hpp"

namespace bivocoder::io {

static_assert(std::endian::native == std::endian::little, "feature file I/O assumes a little-endian host");

class FeatureFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint16_t kFeatureFileVersion = 1;
inline constexpr std::size_t kFeatureHeaderSize = 20;

/// "BVF1", u16 version, u32 sample rate, u32 frame shift, u16 dim, u32 frames, then frames x dim f32.
inline std::string encode_features(const model::FeatureSequence<float>& f) {
  std::string s("BVF1");
  auto put = [&s](auto v) {
    char b[sizeof(v)];
    std::memcpy(b, &v, sizeof(v));
    s.append(b, sizeof(v));
  };
  put(kFeatureFileVersion);
  put(static_cast<std::uint32_t>(f.sample_rate));
  put(static_cast<std::uint32_t>(f.frame_shift));
  put(static_cast<std::uint16_t>(f.dim()));
  put(static_cast<std::uint32_t>(f.frames()));
  s.append(reinterpret_cast<const char*>(f.values.ptr()), f.values.size() * sizeof(float));
  return s;
}

inline model::FeatureSequence<float> decode_features(const std::string& s, const std::string& name = "<memory>") {
  if (s.size() < kFeatureHeaderSize || s.compare(0, 4, "BVF1") != 0)
    throw FeatureFileError(name + ": not a feature file (bad magic)");
  std::size_t pos = 4;
  auto get = [&](auto& v) {
    std::memcpy(&v, s.data() + pos, sizeof(v));
    pos += sizeof(v);
  };
  std::uint16_t version, dim;
  std::uint32_t rate, shift, frames;
  get(version);
  get(rate);
  get(shift);
  get(dim);
  get(frames);
  if (version != kFeatureFileVersion) throw FeatureFileError(name + ": unsupported version " + std::to_string(version));
  const std::size_t payload = static_cast<std::size_t>(frames) * dim * sizeof(float);
  if (s.size() - kFeatureHeaderSize != payload)
    throw FeatureFileError(name + ": payload is " + std::to_string(s.size() - kFeatureHeaderSize) +
                           " bytes, header implies " + std::to_string(payload));
  model::FeatureSequence<float> f{numerics::Tensor<float>({frames, dim}), static_cast<int>(rate), shift};
  std::memcpy(f.values.ptr(), s.data() + kFeatureHeaderSize, payload);
  return f;
}

inline void write_features(const std::string& path, const model::FeatureSequence<float>& f) {
  const std::string bytes = encode_features(f);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FeatureFileError("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FeatureFileError("write failed: " + path);
}

inline model::FeatureSequence<float> read_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FeatureFileError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_features(bytes, path);
}

}  // namespace bivocoder::io
