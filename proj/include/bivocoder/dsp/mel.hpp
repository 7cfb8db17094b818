#pragma once

#include <cmath>

#include "bivocoder/dsp/stft.hpp"

namespace bivocoder::dsp {

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Center frequencies (Hz) of the HTK-scale triangles, 0 Hz to Nyquist.
inline std::vector<double> mel_center_frequencies(std::size_t n_mels, const StftConfig& cfg) {
  const double top = hz_to_mel(cfg.sample_rate / 2.0);
  std::vector<double> centers(n_mels);
  for (std::size_t m = 0; m < n_mels; ++m)
    centers[m] = mel_to_hz(top * static_cast<double>(m + 1) / static_cast<double>(n_mels + 1));
  return centers;
}

/// Triangular HTK mel filterbank, [n_mels, bins], unit peak, no area normalization.
template <typename T = double>
Tensor<T> mel_filterbank(std::size_t n_mels, const StftConfig& cfg = {}) {
  const std::size_t bins = cfg.bins();
  if (n_mels < 1) throw DspError("mel_filterbank: n_mels must be >= 1");
  if (n_mels > bins)
    throw DspError("mel_filterbank: n_mels " + std::to_string(n_mels) + " exceeds " + std::to_string(bins) + " bins");
  const double top = hz_to_mel(cfg.sample_rate / 2.0);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  Tensor<T> fb({n_mels, bins});
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(cfg.fft_size);
      double w = 0.0;
      if (f > lo && f <= mid)
        w = (f - lo) / (mid - lo);
      else if (f > mid && f < hi)
        w = (hi - f) / (hi - mid);
      fb[m * bins + k] = static_cast<T>(w);
    }
  }
  return fb;
}

/// Log mel spectrogram [frames, n_mels]: ln(max(fb . amplitude, 1e-5)).
template <typename T>
Tensor<T> mel_spectrogram(std::span<const T> waveform, const StftConfig& cfg = {}, std::size_t n_mels = 80) {
  const auto spectra = stft(waveform, cfg);
  const auto fb = mel_filterbank<T>(n_mels, cfg);
  const std::size_t frames = spectra.frames(), bins = spectra.bins();
  Tensor<T> mel({frames, n_mels});
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t m = 0; m < n_mels; ++m) {
      T acc = 0;
      for (std::size_t k = 0; k < bins; ++k) acc += fb[m * bins + k] * spectra.amplitude[f * bins + k];
      mel[f * n_mels + m] = acc;
    }
  return log_amplitude(mel);
}

}  // namespace bivocoder::dsp
