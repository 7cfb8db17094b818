#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bivocoder/dsp/mel.hpp"
#include "bivocoder/dsp/stft.hpp"

namespace bivocoder::metrics {

using numerics::Tensor;

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kSnrCap = 100.0;

namespace detail {

inline void require_equal_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw MetricError(std::string(what) + ": length mismatch " + std::to_string(a) + " vs " + std::to_string(b));
}

}  // namespace detail

/// 10 log10(sum ref^2 / sum (ref - deg)^2), capped at +100 dB.
template <typename T>
double snr(std::span<const T> ref, std::span<const T> deg) {
  detail::require_equal_length(ref.size(), deg.size(), "snr");
  double sig = 0, err = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double r = ref[i], e = r - static_cast<double>(deg[i]);
    sig += r * r;
    err += e * e;
  }
  if (sig == 0.0) throw MetricError("snr: reference has zero energy");
  if (err == 0.0) return kSnrCap;
  return std::min(kSnrCap, 10.0 * std::log10(sig / err));
}

template <typename T>
double snr(const std::vector<T>& ref, const std::vector<T>& deg) {
  return snr<T>(std::span<const T>(ref), std::span<const T>(deg));
}

/// RMSE in dB between 20 log10 amplitude spectra, floored at 1e-5.
template <typename T>
double las_rmse(std::span<const T> ref, std::span<const T> deg, const dsp::StftConfig& cfg = {}) {
  detail::require_equal_length(ref.size(), deg.size(), "las_rmse");
  const auto a = dsp::stft(ref, cfg), b = dsp::stft(deg, cfg);
  double acc = 0;
  for (std::size_t i = 0; i < a.amplitude.size(); ++i) {
    const double d = 20.0 * (std::log10(std::max(static_cast<double>(a.amplitude[i]), 1e-5)) -
                              std::log10(std::max(static_cast<double>(b.amplitude[i]), 1e-5)));
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(a.amplitude.size()));
}

/// Orthonormal DCT-II of each row of [frames, n], truncated to `keep` coefficients.
inline Tensor<double> dct2_rows(const Tensor<double>& x, std::size_t keep) {
  const std::size_t frames = x.dim(0), n = x.dim(1);
  if (keep > n) throw MetricError("dct: more coefficients requested than inputs");
  Tensor<double> out({frames, keep});
  std::vector<double> basis(keep * n);
  for (std::size_t k = 0; k < keep; ++k)
    for (std::size_t i = 0; i < n; ++i)
      basis[k * n + i] = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n)) *
                         std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * i + 1.0) / (2.0 * n));
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t k = 0; k < keep; ++k) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += basis[k * n + i] * x[f * n + i];
      out[f * keep + k] = s;
    }
  return out;
}

/// [frames, order + 1] mel cepstrum from the 80-band log mel spectrogram.
template <typename T>
Tensor<double> mel_cepstrum(std::span<const T> wave, std::size_t order = 40, const dsp::StftConfig& cfg = {},
                            std::size_t n_mels = 80) {
  std::vector<double> w(wave.begin(), wave.end());
  const auto logmel = dsp::mel_spectrogram<double>(w, cfg, n_mels);
  return dct2_rows(logmel, order + 1);
}

inline constexpr double kMcdScale = 10.0 * std::numbers::sqrt2 / std::numbers::ln10;

/// (10 sqrt 2 / ln 10) * mean over frames of the Euclidean distance of coefficients 1..order.
inline double mcd_from_cepstra(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.shape != b.shape || a.rank() != 2) throw MetricError("mcd: cepstra must be matching [frames, order + 1]");
  const std::size_t frames = a.dim(0), dim = a.dim(1);
  if (frames == 0) throw MetricError("mcd: no frames");
  double total = 0;
  for (std::size_t f = 0; f < frames; ++f) {
    double s = 0;
    for (std::size_t d = 1; d < dim; ++d) {
      const double diff = a[f * dim + d] - b[f * dim + d];
      s += diff * diff;
    }
    total += std::sqrt(s);
  }
  return kMcdScale * total / static_cast<double>(frames);
}

template <typename T>
double mcd(std::span<const T> ref, std::span<const T> deg, std::size_t order = 40, const dsp::StftConfig& cfg = {}) {
  detail::require_equal_length(ref.size(), deg.size(), "mcd");
  return mcd_from_cepstra(mel_cepstrum(ref, order, cfg), mel_cepstrum(deg, order, cfg));
}

struct F0Track {
  std::vector<double> f0;  // Hz, 0 when unvoiced
  std::vector<bool> voiced;
  double shift_ms = 5.0;

  std::size_t frames() const { return f0.size(); }
};

struct F0Config {
  int sample_rate = 16000;
  double fmin = 60.0;
  double fmax = 400.0;
  std::size_t shift = 80;   // 5 ms
  std::size_t window = 320; // 20 ms integration window
  double threshold = 0.15;
};

/// YIN: difference function, cumulative-mean normalization, absolute threshold, parabolic refinement.
/// Frame i starts at sample i * shift; samples past the end read as zero.
template <typename T>
F0Track estimate_f0(std::span<const T> wave, const F0Config& c = {}) {
  if (!(c.fmin > 0 && c.fmax > c.fmin) || c.shift == 0 || c.window == 0) throw MetricError("estimate_f0: bad config");
  const auto tau_min = static_cast<std::size_t>(std::floor(c.sample_rate / c.fmax));
  const auto tau_max = static_cast<std::size_t>(std::ceil(c.sample_rate / c.fmin));
  const std::size_t frames = wave.size() / c.shift + 1;
  F0Track track{std::vector<double>(frames, 0.0), std::vector<bool>(frames, false),
                1000.0 * static_cast<double>(c.shift) / c.sample_rate};
  auto at = [&](std::size_t i) { return i < wave.size() ? static_cast<double>(wave[i]) : 0.0; };
  std::vector<double> d(tau_max + 2), cm(tau_max + 2);
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t t = f * c.shift;
    for (std::size_t tau = 1; tau <= tau_max + 1; ++tau) {
      double s = 0;
      for (std::size_t j = 0; j < c.window; ++j) {
        const double diff = at(t + j) - at(t + j + tau);
        s += diff * diff;
      }
      d[tau] = s;
    }
    double running = 0;
    bool silent = true;
    cm[0] = 1.0;
    for (std::size_t tau = 1; tau <= tau_max + 1; ++tau) {
      running += d[tau];
      if (d[tau] > 0) silent = false;
      cm[tau] = running > 0 ? d[tau] * static_cast<double>(tau) / running : 1.0;
    }
    if (silent) continue;
    std::size_t best = 0;
    for (std::size_t tau = std::max<std::size_t>(tau_min, 1); tau <= tau_max; ++tau)
      if (cm[tau] < c.threshold) {
        while (tau + 1 <= tau_max && cm[tau + 1] < cm[tau]) ++tau;
        best = tau;
        break;
      }
    if (best == 0) continue;
    double refined = static_cast<double>(best);
    const double a = cm[best - 1], b = cm[best], e = cm[best + 1];
    const double denom = a - 2 * b + e;
    if (denom > 0) refined += 0.5 * (a - e) / denom;
    track.f0[f] = c.sample_rate / refined;
    track.voiced[f] = true;
  }
  return track;
}

struct F0Metrics {
  std::optional<double> f0_rmse_cents;  // undefined without commonly voiced frames
  double vuv_error_percent = 0;
};

inline F0Metrics f0_metrics(const F0Track& ref, const F0Track& deg) {
  if (ref.frames() != deg.frames())
    throw MetricError("f0_metrics: frame count mismatch " + std::to_string(ref.frames()) + " vs " +
                      std::to_string(deg.frames()));
  if (ref.frames() == 0) throw MetricError("f0_metrics: empty tracks");
  double acc = 0;
  std::size_t common = 0, mismatched = 0;
  for (std::size_t i = 0; i < ref.frames(); ++i) {
    if (ref.voiced[i] != deg.voiced[i]) ++mismatched;
    if (ref.voiced[i] && deg.voiced[i]) {
      const double cents = 1200.0 * std::log2(deg.f0[i] / ref.f0[i]);
      acc += cents * cents;
      ++common;
    }
  }
  F0Metrics m;
  if (common) m.f0_rmse_cents = std::sqrt(acc / static_cast<double>(common));
  m.vuv_error_percent = 100.0 * static_cast<double>(mismatched) / static_cast<double>(ref.frames());
  return m;
}

/// One utterance's scores.
struct UtteranceMetrics {
  std::string id;
  double snr = 0, las_rmse = 0, mcd = 0;
  std::optional<double> f0_rmse;
  double vuv_error = 0;
};

template <typename T>
UtteranceMetrics evaluate_pair(const std::string& id, std::span<const T> ref, std::span<const T> deg,
                               const dsp::StftConfig& cfg = {}) {
  detail::require_equal_length(ref.size(), deg.size(), id.c_str());
  UtteranceMetrics m{id};
  m.snr = snr(ref, deg);
  m.las_rmse = las_rmse(ref, deg, cfg);
  m.mcd = mcd(ref, deg, 40, cfg);
  const auto f = f0_metrics(estimate_f0(ref), estimate_f0(deg));
  m.f0_rmse = f.f0_rmse_cents;
  m.vuv_error = f.vuv_error_percent;
  return m;
}

/// Per-utterance values plus corpus means; the F0 mean covers only utterances where it is defined.
struct MetricReport {
  std::vector<UtteranceMetrics> utterances;

  UtteranceMetrics mean() const {
    UtteranceMetrics m{"corpus_mean"};
    if (utterances.empty()) return m;
    double f0 = 0;
    std::size_t f0_n = 0;
    for (const auto& u : utterances) {
      m.snr += u.snr;
      m.las_rmse += u.las_rmse;
      m.mcd += u.mcd;
      m.vuv_error += u.vuv_error;
      if (u.f0_rmse) {
        f0 += *u.f0_rmse;
        ++f0_n;
      }
    }
    const double n = static_cast<double>(utterances.size());
    m.snr /= n;
    m.las_rmse /= n;
    m.mcd /= n;
    m.vuv_error /= n;
    if (f0_n) m.f0_rmse = f0 / static_cast<double>(f0_n);
    return m;
  }
};

struct RtfResult {
  double rtf = 0;         // median seconds per second of audio
  double speedup = 0;     // 1 / rtf
  std::vector<double> seconds;  // per timed repeat, warm-up excluded
};

/// Measures `run` (which synthesizes `audio_seconds` of audio) `repeats` times after one discarded
/// warm-up call. `timer` returns the wall-clock seconds one call took; it is injectable for tests.
inline RtfResult measure_rtf(const std::function<void()>& run, double audio_seconds, std::size_t repeats,
                             std::function<double(const std::function<void()>&)> timer = {}) {
  if (repeats < 3) throw MetricError("rtf: need at least 3 repeats");
  if (!(audio_seconds > 0)) throw MetricError("rtf: audio duration must be positive");
  if (!timer)
    timer = [](const std::function<void()>& f) {
      const auto t0 = std::chrono::steady_clock::now();
      f();
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
  (void)timer(run);
  RtfResult r;
  for (std::size_t i = 0; i < repeats; ++i) r.seconds.push_back(timer(run));
  auto sorted = r.seconds;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  r.rtf = std::max(median, 1e-12) / audio_seconds;
  r.speedup = 1.0 / r.rtf;
  return r;
}

}  // namespace bivocoder::metrics
