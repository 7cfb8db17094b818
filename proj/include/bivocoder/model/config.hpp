#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bivocoder/dsp/stft.hpp"

namespace bivocoder::model {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DiscriminatorConfig {
  std::vector<std::size_t> periods{2, 3, 5, 7, 11};
  std::vector<std::size_t> period_channels{32, 128, 512, 1024, 1024};
  /// (fft size, hop, window length) per resolution.
  std::vector<std::array<std::size_t, 3>> resolutions{{512, 128, 512}, {1024, 256, 1024}, {2048, 512, 2048}};
  std::size_t resolution_channels = 32;
  double leaky_slope = 0.1;
};

/// Architecture of the vocoder and its discriminators. Everything here enters the checkpoint digest.
struct ModelConfig {
  std::string preset = "base";
  std::size_t channels = 256;
  std::size_t expansion = 4;
  std::size_t blocks = 8;
  std::size_t kernel = 7;
  std::size_t feature_dim = 32;
  std::size_t rate = 8;
  double norm_eps = 1e-6;
  dsp::StftConfig stft{};
  DiscriminatorConfig disc{};

  std::size_t feature_shift() const { return stft.frame_shift * rate; }

  static ModelConfig base() { return {}; }

  /// Small network for gradient checks, CI, and overfit runs.
  static ModelConfig tiny() {
    ModelConfig c;
    c.preset = "tiny";
    c.channels = 8;
    c.expansion = 4;
    c.blocks = 1;
    c.disc.period_channels = {8, 16, 32, 32, 32};
    c.disc.resolution_channels = 8;
    return c;
  }

  static ModelConfig from_preset(const std::string& name) {
    if (name == "base") return base();
    if (name == "tiny") return tiny();
    throw ConfigError("unknown model preset '" + name + "' (expected tiny or base)");
  }

  /// Stable text form: key=value pairs separated by ';'.
  std::string canonical() const {
    std::ostringstream os;
    os.precision(17);
    auto list = [](const std::vector<std::size_t>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
      return s;
    };
    std::string res;
    for (std::size_t i = 0; i < disc.resolutions.size(); ++i) {
      const auto& r = disc.resolutions[i];
      res += (i ? "," : "") + std::to_string(r[0]) + "/" + std::to_string(r[1]) + "/" + std::to_string(r[2]);
    }
    os << "preset=" << preset << ";channels=" << channels << ";expansion=" << expansion << ";blocks=" << blocks
       << ";kernel=" << kernel << ";feature_dim=" << feature_dim << ";rate=" << rate << ";norm_eps=" << norm_eps
       << ";sample_rate=" << stft.sample_rate << ";frame_length=" << stft.frame_length
       << ";frame_shift=" << stft.frame_shift << ";fft_size=" << stft.fft_size << ";periods=" << list(disc.periods)
       << ";period_channels=" << list(disc.period_channels) << ";resolutions=" << res
       << ";resolution_channels=" << disc.resolution_channels << ";leaky_slope=" << disc.leaky_slope;
    return os.str();
  }

  static ModelConfig from_canonical(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string item;
    while (std::getline(is, item, ';')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ConfigError("model config: malformed entry '" + item + "'");
      kv[item.substr(0, eq)] = item.substr(eq + 1);
    }
    auto get = [&](const char* k) {
      auto it = kv.find(k);
      if (it == kv.end()) throw ConfigError(std::string("model config: missing key ") + k);
      return it->second;
    };
    auto num = [&](const char* k) { return static_cast<std::size_t>(std::stoull(get(k))); };
    auto list = [&](const char* k) {
      std::vector<std::size_t> v;
      std::istringstream ls(get(k));
      std::string tok;
      while (std::getline(ls, tok, ',')) v.push_back(std::stoull(tok));
      return v;
    };
    ModelConfig c;
    try {
      c.preset = get("preset");
      c.channels = num("channels");
      c.expansion = num("expansion");
      c.blocks = num("blocks");
      c.kernel = num("kernel");
      c.feature_dim = num("feature_dim");
      c.rate = num("rate");
      c.norm_eps = std::stod(get("norm_eps"));
      c.stft = dsp::StftConfig::with(static_cast<int>(num("sample_rate")), num("frame_length"), num("frame_shift"),
                                     num("fft_size"));
      c.disc.periods = list("periods");
      c.disc.period_channels = list("period_channels");
      c.disc.resolutions.clear();
      std::istringstream rs(get("resolutions"));
      std::string tok;
      while (std::getline(rs, tok, ',')) {
        std::array<std::size_t, 3> r{};
        if (std::sscanf(tok.c_str(), "%zu/%zu/%zu", &r[0], &r[1], &r[2]) != 3)
          throw ConfigError("model config: bad resolution '" + tok + "'");
        c.disc.resolutions.push_back(r);
      }
      c.disc.resolution_channels = num("resolution_channels");
      c.disc.leaky_slope = std::stod(get("leaky_slope"));
    } catch (const std::logic_error& e) {
      if (dynamic_cast<const ConfigError*>(&e)) throw;
      throw ConfigError(std::string("model config: bad value: ") + e.what());
    }
    return c;
  }

  /// FNV-1a 64 over the canonical text.
  std::uint64_t digest() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : canonical()) {
      h ^= ch;
      h *= 0x100000001b3ull;
    }
    return h;
  }
};

}  // namespace bivocoder::model
