#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>

#include "bivocoder/losses/losses.hpp"
#include "bivocoder/model/config.hpp"
#include "bivocoder/numerics/adamw.hpp"

namespace bivocoder::training {

class TrainConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Training run settings. Loaded from a flat `key = value` text file; `#` starts a comment.
struct TrainConfig {
  std::string data_dir;
  std::string out_dir = "run";
  std::string preset = "tiny";
  std::size_t crop = 8000;
  std::size_t batch_size = 16;
  std::uint64_t max_steps = 1000;
  numerics::AdamWHyper optimizer{};
  double lr_decay = 0.999;  // per epoch
  std::uint64_t seed = 0;
  double validation_split = 0.0;
  std::uint64_t validation_interval = 0;  // 0: never
  std::uint64_t checkpoint_interval = 1000;
  bool freeze_discriminators = false;
  losses::LossWeights weights{};

  std::string checkpoint_path() const { return out_dir + "/model.bvck"; }
  std::string log_path() const { return out_dir + "/train_log.ndjson"; }

  model::ModelConfig model_config() const { return model::ModelConfig::from_preset(preset); }

  /// Whether the discriminators take part in the generator objective at all.
  bool adversarial() const { return weights.adversarial > 0.0 || weights.feature_matching > 0.0; }

  void validate() const {
    if (crop == 0) throw TrainConfigError("crop must be positive");
    if (batch_size == 0) throw TrainConfigError("batch_size must be >= 1");
    if (!(optimizer.lr > 0.0)) throw TrainConfigError("lr must be positive");
    if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0))
      throw TrainConfigError("betas must lie in [0, 1)");
    if (!(optimizer.weight_decay >= 0.0)) throw TrainConfigError("weight_decay must be >= 0");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw TrainConfigError("lr_decay must lie in (0, 1]");
    if (!(validation_split >= 0.0 && validation_split < 1.0))
      throw TrainConfigError("validation_split must lie in [0, 1)");
    try {
      weights.validate();
      (void)model_config();
    } catch (const std::invalid_argument& e) {
      throw TrainConfigError(e.what());
    }
  }

  using Setter = std::function<void(TrainConfig&, const std::string&)>;

  static const std::map<std::string, Setter>& keys() {
    auto str = [](std::string TrainConfig::*m) { return [m](TrainConfig& c, const std::string& v) { c.*m = v; }; };
    auto size = [](auto m) {
      return [m](TrainConfig& c, const std::string& v) { c.*m = static_cast<std::remove_reference_t<decltype(c.*m)>>(parse_uint(v)); };
    };
    auto real = [](auto get) {
      return [get](TrainConfig& c, const std::string& v) { get(c) = parse_double(v); };
    };
    static const std::map<std::string, Setter> k{
        {"data_dir", str(&TrainConfig::data_dir)},
        {"out_dir", str(&TrainConfig::out_dir)},
        {"preset", str(&TrainConfig::preset)},
        {"crop", size(&TrainConfig::crop)},
        {"batch_size", size(&TrainConfig::batch_size)},
        {"max_steps", size(&TrainConfig::max_steps)},
        {"seed", size(&TrainConfig::seed)},
        {"validation_interval", size(&TrainConfig::validation_interval)},
        {"checkpoint_interval", size(&TrainConfig::checkpoint_interval)},
        {"lr", real([](TrainConfig& c) -> double& { return c.optimizer.lr; })},
        {"beta1", real([](TrainConfig& c) -> double& { return c.optimizer.beta1; })},
        {"beta2", real([](TrainConfig& c) -> double& { return c.optimizer.beta2; })},
        {"weight_decay", real([](TrainConfig& c) -> double& { return c.optimizer.weight_decay; })},
        {"lr_decay", real([](TrainConfig& c) -> double& { return c.lr_decay; })},
        {"validation_split", real([](TrainConfig& c) -> double& { return c.validation_split; })},
        {"lambda_amplitude", real([](TrainConfig& c) -> double& { return c.weights.amplitude; })},
        {"lambda_phase", real([](TrainConfig& c) -> double& { return c.weights.phase; })},
        {"lambda_complex", real([](TrainConfig& c) -> double& { return c.weights.complex; })},
        {"lambda_mel", real([](TrainConfig& c) -> double& { return c.weights.mel; })},
        {"lambda_adversarial", real([](TrainConfig& c) -> double& { return c.weights.adversarial; })},
        {"lambda_feature_matching", real([](TrainConfig& c) -> double& { return c.weights.feature_matching; })},
        {"freeze_discriminators",
         [](TrainConfig& c, const std::string& v) {
           if (v == "true" || v == "1") c.freeze_discriminators = true;
           else if (v == "false" || v == "0") c.freeze_discriminators = false;
           else throw TrainConfigError("expected true or false, got '" + v + "'");
         }},
    };
    return k;
  }

  void set(const std::string& key, const std::string& value) {
    const auto& k = keys();
    auto it = k.find(key);
    if (it == k.end()) throw TrainConfigError("unknown config key '" + key + "'");
    try {
      it->second(*this, value);
    } catch (const TrainConfigError& e) {
      throw TrainConfigError("config key '" + key + "': " + e.what());
    }
  }

  static TrainConfig parse(const std::string& text, const std::string& source = "<config>") {
    TrainConfig c;
    std::istringstream in(text);
    std::string line;
    for (int n = 1; std::getline(in, line); ++n) {
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto trimmed = trim(line);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw TrainConfigError(source + ":" + std::to_string(n) + ": expected key = value");
      try {
        c.set(trim(trimmed.substr(0, eq)), trim(trimmed.substr(eq + 1)));
      } catch (const TrainConfigError& e) {
        throw TrainConfigError(source + ":" + std::to_string(n) + ": " + e.what());
      }
    }
    c.validate();
    return c;
  }

  static TrainConfig load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw TrainConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path);
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  }

  static std::uint64_t parse_uint(const std::string& v) {
    std::size_t used = 0;
    std::uint64_t x = 0;
    try {
      if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
      x = std::stoull(v, &used);
    } catch (const std::logic_error&) {
      throw TrainConfigError("expected a non-negative integer, got '" + v + "'");
    }
    if (used != v.size()) throw TrainConfigError("expected a non-negative integer, got '" + v + "'");
    return x;
  }

  static double parse_double(const std::string& v) {
    std::size_t used = 0;
    double x = 0;
    try {
      x = std::stod(v, &used);
    } catch (const std::logic_error&) {
      throw TrainConfigError("expected a number, got '" + v + "'");
    }
    if (used != v.size()) throw TrainConfigError("expected a number, got '" + v + "'");
    return x;
  }
};

}  // namespace bivocoder::training
