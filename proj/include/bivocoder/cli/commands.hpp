#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <new>
#include <numbers>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "bivocoder/io/feature_file.hpp"
#include "bivocoder/io/wav.hpp"
#include "bivocoder/metrics/metrics.hpp"
#include "bivocoder/model/bivocoder.hpp"
#include "bivocoder/model/checkpoint.hpp"
#include "bivocoder/training/trainer.hpp"

namespace bivocoder::cli {

enum ExitCode : int { kOk = 0, kInternal = 1, kUsage = 2 };

/// Usage or input problem that is not tied to a specific module error type.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Runs `body`, mapping failures to exit codes: bad input or usage gives 2, anything else 1.
inline int guarded(std::ostream& log, const std::function<int()>& body) {
  try {
    return body();
  } catch (const std::invalid_argument& e) {  // config, dimension, DSP, metric and usage errors
    log << "error: " << e.what() << '\n';
  } catch (const io::WavError& e) {
    log << "error: " << e.what() << '\n';
  } catch (const io::FeatureFileError& e) {
    log << "error: " << e.what() << '\n';
  } catch (const model::CheckpointError& e) {
    log << "error: " << e.what() << '\n';
  } catch (const training::DatasetError& e) {
    log << "error: " << e.what() << '\n';
  } catch (const std::bad_alloc&) {
    log << "internal error: out of memory\n";
    return kInternal;
  } catch (const std::exception& e) {
    log << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kUsage;
}

/// Generator weights from a training checkpoint; discriminator entries are ignored.
inline model::BiVocoder<float> load_model(const std::string& path) {
  const auto ck = model::load_checkpoint_file(path);
  model::BiVocoder<float> m(ck.config);
  model::restore_params(ck, m.named_parameters());
  return m;
}

struct TrainArgs {
  std::string config;
  std::string resume;
};

inline int cmd_train(const TrainArgs& a, std::ostream& log) {
  const auto cfg = training::TrainConfig::load(a.config);
  log << "training preset " << cfg.preset << " for " << cfg.max_steps << " steps from " << cfg.data_dir << '\n';
  const auto every = std::max<std::uint64_t>(1, cfg.max_steps / 20);
  const auto path = training::train<float>(cfg, a.resume, [&](const training::StepReport& r) {
    if (r.step % every == 0 || r.step == cfg.max_steps)
      log << "step " << r.step << " loss " << r.g.total << " mel " << r.g.mel << " lr " << r.lr << '\n';
  });
  log << "checkpoint written to " << path << '\n';
  return kOk;
}

struct ExtractArgs {
  std::string ckpt, in, out;
};

inline int cmd_extract(const ExtractArgs& a, std::ostream& log) {
  const auto m = load_model(a.ckpt);
  const auto wave = io::read_wav(a.in);
  const auto f = m.extract_features(wave);
  io::write_features(a.out, f);
  log << a.out << ": " << f.frames() << " frames x " << f.dim() << '\n';
  return kOk;
}

struct SynthArgs {
  std::string ckpt, in, out;
  std::optional<std::size_t> length;
};

inline int cmd_synth(const SynthArgs& a, std::ostream& log) {
  const auto m = load_model(a.ckpt);
  const auto f = io::read_features(a.in);
  if (f.sample_rate != m.stft().sample_rate)
    throw UsageError(a.in + ": sample rate " + std::to_string(f.sample_rate) + " Hz does not match the model's " +
                     std::to_string(m.stft().sample_rate) + " Hz");
  if (f.frame_shift != m.config().feature_shift())
    throw UsageError(a.in + ": frame shift " + std::to_string(f.frame_shift) + " does not match the model's " +
                     std::to_string(m.config().feature_shift()));
  const std::size_t len = a.length.value_or(f.frames() * f.frame_shift);
  if (len == 0) throw UsageError("--len must be positive");
  const auto y = m.synthesize(f, len);
  io::write_wav(a.out, y);
  log << a.out << ": " << y.size() << " samples\n";
  return kOk;
}

struct CopySynthArgs {
  std::string ckpt, in, out;
  bool ref_metrics = false;
};

inline int cmd_copysynth(const CopySynthArgs& a, std::ostream& out, std::ostream& log) {
  const auto m = load_model(a.ckpt);
  const auto x = io::read_wav(a.in);
  const auto y = m.analysis_synthesis(x);
  io::write_wav(a.out, y);
  log << a.out << ": " << y.size() << " samples\n";
  if (a.ref_metrics) {
    // Scores against the written (quantized) output so they match what a later eval would see.
    const auto q = io::decode_wav(io::encode_wav(y));
    out << std::fixed << std::setprecision(3) << std::filesystem::path(a.in).filename().string()
        << " snr_db=" << metrics::snr<float>(x, q) << '\n';
  }
  return kOk;
}

struct EvalArgs {
  std::string ref, deg, report;
};

inline nlohmann::ordered_json to_json(const metrics::UtteranceMetrics& u) {
  nlohmann::ordered_json j{{"id", u.id}, {"snr_db", u.snr}, {"las_rmse_db", u.las_rmse}, {"mcd_db", u.mcd}};
  j["f0_rmse_cents"] = u.f0_rmse ? nlohmann::ordered_json(*u.f0_rmse) : nlohmann::ordered_json(nullptr);
  j["vuv_error_percent"] = u.vuv_error;
  return j;
}

inline std::vector<std::string> wav_names(const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw UsageError("not a directory: " + dir);
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

/// Scores every ref/deg pair with a matching file name. Unmatched and failing pairs are listed and
/// skipped; the run fails only when nothing could be scored.
inline int cmd_eval(const EvalArgs& a, std::ostream& log) {
  namespace fs = std::filesystem;
  const auto ref_names = wav_names(a.ref), deg_names = wav_names(a.deg);
  metrics::MetricReport report;
  nlohmann::ordered_json records = nlohmann::ordered_json::array();
  std::size_t skipped = 0;
  for (const auto& name : ref_names) {
    if (!std::binary_search(deg_names.begin(), deg_names.end(), name)) {
      log << "skipped " << name << ": no match in " << a.deg << '\n';
      records.push_back({{"id", name}, {"error", "no matching degraded file"}});
      ++skipped;
      continue;
    }
    try {
      const auto r = io::read_wav((fs::path(a.ref) / name).string());
      const auto d = io::read_wav((fs::path(a.deg) / name).string());
      report.utterances.push_back(
          metrics::evaluate_pair<float>(fs::path(name).stem().string(), std::span<const float>(r), std::span<const float>(d)));
      records.push_back(to_json(report.utterances.back()));
    } catch (const std::exception& e) {
      log << "skipped " << name << ": " << e.what() << '\n';
      records.push_back({{"id", name}, {"error", e.what()}});
      ++skipped;
    }
  }
  for (const auto& name : deg_names)
    if (!std::binary_search(ref_names.begin(), ref_names.end(), name)) {
      log << "skipped " << name << ": no match in " << a.ref << '\n';
      records.push_back({{"id", name}, {"error", "no matching reference file"}});
      ++skipped;
    }
  nlohmann::ordered_json doc{{"pairs", records}};
  auto summary = to_json(report.mean());
  summary["evaluated"] = report.utterances.size();
  summary["skipped"] = skipped;
  doc["summary"] = summary;
  std::ofstream f(a.report, std::ios::trunc);
  if (!f) throw UsageError("cannot write report " + a.report);
  f << doc.dump(2) << '\n';
  log << "evaluated " << report.utterances.size() << " pairs, skipped " << skipped << "; report " << a.report << '\n';
  return report.utterances.empty() ? kUsage : kOk;
}

struct BenchArgs {
  std::string ckpt;
  double seconds = 1;
  std::size_t repeats = 5;
};

inline std::string device_description() {
  std::ifstream f("/proc/cpuinfo");
  for (std::string line; std::getline(f, line);)
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) return line.substr(line.find_first_not_of(' ', colon + 1)) + ", 1 thread";
    }
  return "unknown CPU, 1 thread";
}

/// Synthesis-only timing: features come from a synthetic harmonic signal and are extracted untimed.
inline metrics::RtfResult bench_model(const model::BiVocoder<float>& m, double seconds, std::size_t repeats) {
  const auto n = static_cast<std::size_t>(seconds * m.stft().sample_rate);
  std::vector<float> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / m.stft().sample_rate;
    for (int h = 1; h <= 8; ++h) x[i] += static_cast<float>(0.2 / h * std::sin(2 * std::numbers::pi * 130.0 * h * t));
  }
  const auto features = m.extract_features(x);
  return metrics::measure_rtf([&] { (void)m.synthesize(features, n); }, seconds, repeats);
}

inline int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& log) {
  if (!(a.seconds >= 1)) throw UsageError("--seconds must be >= 1");
  if (a.repeats < 3) throw UsageError("--repeats must be >= 3");
  const auto m = load_model(a.ckpt);
  log << "benchmarking " << a.seconds << " s of audio, " << a.repeats << " repeats\n";
  const auto r = bench_model(m, a.seconds, a.repeats);
  out << std::setprecision(6) << "rtf=" << r.rtf << " speed=" << r.speedup << "x-real-time preset=" << m.config().preset
      << " seconds=" << a.seconds << " repeats=" << a.repeats << " device=\"" << device_description() << "\"\n";
  return kOk;
}

}  // namespace bivocoder::cli
