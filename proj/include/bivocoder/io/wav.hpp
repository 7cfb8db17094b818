#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

namespace bivocoder::io {

/// Unsupported or malformed audio input.
class WavError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kSampleRate = 16000;

struct WavInfo {
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
};

namespace detail {

inline std::uint32_t le32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t le16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

inline void put32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

}  // namespace detail

/// Decodes a RIFF/WAVE PCM16 mono 16 kHz byte stream into samples in [-1, 1).
inline std::vector<float> decode_wav(const std::string& bytes, const std::string& name = "<memory>") {
  const auto* d = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12 || bytes.compare(0, 4, "RIFF") != 0 || bytes.compare(8, 4, "WAVE") != 0)
    throw WavError(name + ": not a RIFF/WAVE file");
  WavInfo info;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id = bytes.substr(pos, 4);
    const std::uint32_t len = detail::le32(d + pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      if (len < 16 || body + 16 > bytes.size()) throw WavError(name + ": truncated fmt chunk");
      info.format = detail::le16(d + body);
      info.channels = detail::le16(d + body + 2);
      info.sample_rate = detail::le32(d + body + 4);
      info.bits = detail::le16(d + body + 14);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw WavError(name + ": data chunk before fmt chunk");
      if (info.format != 1) throw WavError(name + ": unsupported encoding " + std::to_string(info.format) + ", need PCM");
      if (info.channels != 1)
        throw WavError(name + ": " + std::to_string(info.channels) + " channels, need mono (1 channel)");
      if (info.sample_rate != kSampleRate)
        throw WavError(name + ": sample rate " + std::to_string(info.sample_rate) + " Hz, need 16000 Hz");
      if (info.bits != 16) throw WavError(name + ": " + std::to_string(info.bits) + "-bit samples, need 16-bit");
      const std::size_t avail = std::min<std::size_t>(len, bytes.size() - body);
      if (avail != len) throw WavError(name + ": truncated data chunk");
      std::vector<float> out(len / 2);
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<float>(static_cast<std::int16_t>(detail::le16(d + body + 2 * i))) / 32768.0f;
      return out;
    }
    pos = body + len + (len & 1);
  }
  throw WavError(name + ": no data chunk");
}

inline std::vector<float> read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw WavError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_wav(bytes, path);
}

/// PCM16 encoding with rounding and clipping to [-1, 1].
inline std::string encode_wav(const std::vector<float>& samples, int sample_rate = kSampleRate) {
  std::string s;
  const std::uint32_t data_len = static_cast<std::uint32_t>(samples.size() * 2);
  s += "RIFF";
  detail::put32(s, 36 + data_len);
  s += "WAVEfmt ";
  detail::put32(s, 16);
  detail::put16(s, 1);
  detail::put16(s, 1);
  detail::put32(s, static_cast<std::uint32_t>(sample_rate));
  detail::put32(s, static_cast<std::uint32_t>(sample_rate) * 2);
  detail::put16(s, 2);
  detail::put16(s, 16);
  s += "data";
  detail::put32(s, data_len);
  for (float x : samples) {
    const float c = std::isfinite(x) ? std::clamp(x, -1.0f, 1.0f) : 0.0f;
    const long v = std::lround(c * 32767.0f);
    detail::put16(s, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  return s;
}

inline void write_wav(const std::string& path, const std::vector<float>& samples, int sample_rate = kSampleRate) {
  const std::string bytes = encode_wav(samples, sample_rate);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw WavError("cannot open " + path + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw WavError("write failed: " + path);
}

}  // namespace bivocoder::io
