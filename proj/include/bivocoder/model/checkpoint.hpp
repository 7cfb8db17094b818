#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bivocoder/model/config.hpp"
#include "bivocoder/model/layers.hpp"
#include "bivocoder/numerics/adamw.hpp"

namespace bivocoder::model {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct OptimizerBlob {
  std::uint64_t step = 0;
  numerics::AdamWHyper hyper;
  std::vector<std::vector<float>> m, v;
};

/// Everything a checkpoint holds, in 32-bit storage precision.
struct Checkpoint {
  ModelConfig config;
  std::vector<std::pair<std::string, Tensor<float>>> params;
  std::map<std::string, OptimizerBlob> optimizers;  // keyed by 4-char tag
  std::string train_state;                            // JSON text
};

namespace detail {

inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

class Writer {
 public:
  template <typename U>
  void put(U v) {
    char buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    out_.append(buf, sizeof(U));
  }
  void put_bytes(const std::string& s) { out_ += s; }
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  template <typename U>
  void put_array(const std::vector<U>& v) {
    put<std::uint64_t>(v.size());
    out_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(U));
  }
  std::string& str() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& data, std::size_t begin, std::size_t end) : d_(data), pos_(begin), end_(end) {}

  void need(std::size_t n) const {
    if (n > end_ - pos_) throw CheckpointError("checkpoint corrupt: truncated data");
  }
  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, d_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s = d_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string get_string() { return get_bytes(get<std::uint32_t>()); }
  template <typename U>
  std::vector<U> get_array() {
    const auto n = get<std::uint64_t>();
    if (n > (end_ - pos_) / sizeof(U)) throw CheckpointError("checkpoint corrupt: truncated array");
    std::vector<U> v(n);
    std::memcpy(v.data(), d_.data() + pos_, n * sizeof(U));
    pos_ += n * sizeof(U);
    return v;
  }
  bool done() const { return pos_ == end_; }
  std::size_t pos() const { return pos_; }

 private:
  const std::string& d_;
  std::size_t pos_, end_;
};

inline void write_section(Writer& w, const char* tag, const std::string& payload) {
  w.put_bytes(std::string(tag, 4));
  w.put<std::uint64_t>(payload.size());
  w.put_bytes(payload);
}

}  // namespace detail

/// Layout: "BVCK", u32 version, u64 config digest, config text, tagged sections
/// (tag, u64 length, payload), then "END " with an FNV-1a checksum of all prior bytes.
inline std::string encode_checkpoint(const Checkpoint& ck) {
  detail::Writer w;
  w.put_bytes("BVCK");
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(ck.config.digest());
  w.put_string(ck.config.canonical());

  detail::Writer p;
  p.put<std::uint32_t>(static_cast<std::uint32_t>(ck.params.size()));
  for (const auto& [name, t] : ck.params) {
    p.put_string(name);
    p.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape) p.put<std::uint64_t>(d);
    p.put_array(t.data);
  }
  detail::write_section(w, "PARM", p.str());

  for (const auto& [tag, opt] : ck.optimizers) {
    if (tag.size() != 4) throw CheckpointError("optimizer tag must be 4 characters: " + tag);
    detail::Writer o;
    o.put<std::uint64_t>(opt.step);
    o.put<double>(opt.hyper.lr);
    o.put<double>(opt.hyper.beta1);
    o.put<double>(opt.hyper.beta2);
    o.put<double>(opt.hyper.eps);
    o.put<double>(opt.hyper.weight_decay);
    o.put<std::uint32_t>(static_cast<std::uint32_t>(opt.m.size()));
    for (std::size_t i = 0; i < opt.m.size(); ++i) {
      o.put_array(opt.m[i]);
      o.put_array(opt.v[i]);
    }
    detail::write_section(w, tag.c_str(), o.str());
  }
  detail::write_section(w, "TRST", ck.train_state);

  const std::uint64_t sum = detail::fnv1a(w.str());
  w.put_bytes("END ");
  w.put<std::uint64_t>(sum);
  return std::move(w.str());
}

/// Parses and validates a checkpoint. If `expected_digest` is given, a different config is an error.
inline Checkpoint decode_checkpoint(const std::string& bytes, std::optional<std::uint64_t> expected_digest = {}) {
  constexpr std::size_t trailer = 12;
  if (bytes.size() < 16 + trailer || bytes.compare(0, 4, "BVCK") != 0)
    throw CheckpointError("not a checkpoint file (bad magic or too short)");
  const std::size_t body = bytes.size() - trailer;
  if (bytes.compare(body, 4, "END ") != 0) throw CheckpointError("checkpoint corrupt: missing end marker (truncated?)");
  std::uint64_t stored_sum;
  std::memcpy(&stored_sum, bytes.data() + body + 4, 8);
  if (detail::fnv1a(bytes.substr(0, body)) != stored_sum) throw CheckpointError("checkpoint corrupt: checksum mismatch");

  detail::Reader r(bytes, 4, body);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  const auto digest = r.get<std::uint64_t>();
  Checkpoint ck;
  try {
    ck.config = ModelConfig::from_canonical(r.get_string());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint corrupt: ") + e.what());
  }
  if (ck.config.digest() != digest) throw CheckpointError("checkpoint corrupt: config digest does not match its text");
  if (expected_digest && *expected_digest != digest)
    throw CheckpointError("checkpoint config mismatch: file was written for a different model configuration");

  bool have_params = false;
  while (!r.done()) {
    const std::string tag = r.get_bytes(4);
    const auto len = r.get<std::uint64_t>();
    r.need(len);
    const std::size_t start = r.pos();
    detail::Reader s(bytes, start, start + len);
    if (tag == "PARM") {
      const auto count = s.get<std::uint32_t>();
      for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = s.get_string();
        const auto rank = s.get<std::uint32_t>();
        if (rank > 8) throw CheckpointError("checkpoint corrupt: implausible rank for " + name);
        Shape shape(rank);
        for (auto& d : shape) d = s.get<std::uint64_t>();
        auto data = s.get_array<float>();
        if (data.size() != numerics::shape_size(shape))
          throw CheckpointError("checkpoint corrupt: size mismatch for " + name);
        ck.params.emplace_back(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
      }
      have_params = true;
    } else if (tag == "TRST") {
      ck.train_state = s.get_bytes(len);
    } else {
      OptimizerBlob o;
      o.step = s.get<std::uint64_t>();
      o.hyper.lr = s.get<double>();
      o.hyper.beta1 = s.get<double>();
      o.hyper.beta2 = s.get<double>();
      o.hyper.eps = s.get<double>();
      o.hyper.weight_decay = s.get<double>();
      const auto n = s.get<std::uint32_t>();
      for (std::uint32_t i = 0; i < n; ++i) {
        o.m.push_back(s.get_array<float>());
        o.v.push_back(s.get_array<float>());
      }
      ck.optimizers[tag] = std::move(o);
    }
    if (!s.done()) throw CheckpointError("checkpoint corrupt: section " + tag + " has trailing bytes");
    r.get_bytes(len);
  }
  if (!have_params) throw CheckpointError("checkpoint corrupt: no parameter table");
  return ck;
}

inline void save_checkpoint_file(const Checkpoint& ck, const std::string& path) {
  const std::string bytes = encode_checkpoint(ck);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot open " + tmp + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw CheckpointError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw CheckpointError("cannot move checkpoint into place: " + path);
}

inline Checkpoint load_checkpoint_file(const std::string& path, std::optional<std::uint64_t> expected_digest = {}) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, expected_digest);
}

template <typename T>
void append_params(Checkpoint& ck, const ParamList<T>& params) {
  for (const auto& [name, p] : params) {
    Tensor<float> t(p.shape());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(p.value()[i]);
    ck.params.emplace_back(name, std::move(t));
  }
}

/// Copies stored values into every listed parameter; missing names or shape changes are errors.
template <typename T>
void restore_params(const Checkpoint& ck, const ParamList<T>& params) {
  std::map<std::string, const Tensor<float>*> index;
  for (const auto& [name, t] : ck.params) index[name] = &t;
  for (const auto& [name, p] : params) {
    auto it = index.find(name);
    if (it == index.end()) throw CheckpointError("checkpoint is missing parameter " + name);
    if (it->second->shape != p.shape())
      throw CheckpointError("checkpoint shape mismatch for " + name + ": " + numerics::shape_string(it->second->shape) +
                            " vs " + numerics::shape_string(p.shape()));
    auto& dst = Var<T>(p).mutable_value().data;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(it->second->data[i]);
  }
}

template <typename T>
OptimizerBlob to_blob(const numerics::AdamWState<T>& s) {
  OptimizerBlob b{s.step, s.hyper, {}, {}};
  for (std::size_t i = 0; i < s.m.size(); ++i) {
    b.m.emplace_back(s.m[i].begin(), s.m[i].end());
    b.v.emplace_back(s.v[i].begin(), s.v[i].end());
  }
  return b;
}

template <typename T>
numerics::AdamWState<T> from_blob(const OptimizerBlob& b, const std::vector<Var<T>>& params) {
  if (b.m.size() != params.size()) throw CheckpointError("optimizer state does not match parameter count");
  numerics::AdamWState<T> s;
  s.step = b.step;
  s.hyper = b.hyper;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (b.m[i].size() != params[i].size() || b.v[i].size() != params[i].size())
      throw CheckpointError("optimizer moment size mismatch for parameter " + std::to_string(i));
    s.m.emplace_back(b.m[i].begin(), b.m[i].end());
    s.v.emplace_back(b.v[i].begin(), b.v[i].end());
  }
  return s;
}

}  // namespace bivocoder::model
