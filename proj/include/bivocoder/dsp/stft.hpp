#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bivocoder/dsp/fft.hpp"
#include "bivocoder/numerics/ops.hpp"

namespace bivocoder::dsp {

using numerics::Tensor;

class DspError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::vector<double> periodic_hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

struct StftConfig {
  int sample_rate = 16000;
  std::size_t frame_length = 320;
  std::size_t frame_shift = 40;
  std::size_t fft_size = 1024;
  std::vector<double> window = periodic_hann(320);

  std::size_t bins() const { return fft_size / 2 + 1; }
  std::size_t num_frames(std::size_t length) const { return length / frame_shift + 1; }
  std::size_t pad() const { return frame_length / 2; }

  static StftConfig with(int sample_rate, std::size_t frame_length, std::size_t frame_shift, std::size_t fft_size) {
    StftConfig c;
    c.sample_rate = sample_rate;
    c.frame_length = frame_length;
    c.frame_shift = frame_shift;
    c.fft_size = fft_size;
    c.window = periodic_hann(frame_length);
    return c;
  }

  void validate() const {
    if (frame_length == 0 || frame_shift == 0 || fft_size == 0) throw DspError("stft config: zero size");
    if (frame_length > fft_size) throw DspError("stft config: frame length exceeds fft size");
    if (frame_shift > frame_length) throw DspError("stft config: frame shift exceeds frame length");
    if (window.size() != frame_length) throw DspError("stft config: window length != frame length");
    if (fft_size % 2 != 0) throw DspError("stft config: fft size must be even");
  }
};

enum class PadMode { reflect, zero };

/// Amplitude and phase, each [frames, bins].
template <typename T>
struct Spectra {
  Tensor<T> amplitude;
  Tensor<T> phase;

  std::size_t frames() const { return amplitude.dim(0); }
  std::size_t bins() const { return amplitude.dim(1); }
};

namespace detail {

inline std::size_t padded_source(long long i, std::size_t n, PadMode mode, bool& valid) {
  valid = true;
  if (i >= 0 && i < static_cast<long long>(n)) return static_cast<std::size_t>(i);
  if (mode == PadMode::zero) {
    valid = false;
    return 0;
  }
  if (n == 1) return 0;
  const long long period = 2 * static_cast<long long>(n - 1);
  long long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<long long>(n) ? m : period - m);
}

/// Complex STFT of one signal into channel-first buffers re/im of [bins, frames].
template <typename T>
void stft_complex(std::span<const T> x, const StftConfig& cfg, PadMode mode, T* re, T* im) {
  const std::size_t n_fft = cfg.fft_size, bins = cfg.bins(), frames = cfg.num_frames(x.size());
  const long long pad = static_cast<long long>(cfg.pad());
  std::vector<T> buf(n_fft, T(0));
  std::vector<std::complex<T>> spec(bins);
  for (std::size_t f = 0; f < frames; ++f) {
    const long long start = static_cast<long long>(f * cfg.frame_shift) - pad;
    for (std::size_t n = 0; n < cfg.frame_length; ++n) {
      bool valid;
      const std::size_t src = padded_source(start + static_cast<long long>(n), x.size(), mode, valid);
      buf[n] = valid ? x[src] * static_cast<T>(cfg.window[n]) : T(0);
    }
    RealFft<T>::forward(buf.data(), spec.data(), n_fft);
    for (std::size_t k = 0; k < bins; ++k) {
      re[k * frames + f] = spec[k].real();
      im[k * frames + f] = spec[k].imag();
    }
  }
}

/// Sum over frames of the squared window at each padded-signal position.
template <typename T>
std::vector<T> window_square_envelope(const StftConfig& cfg, std::size_t frames) {
  std::vector<T> env((frames - 1) * cfg.frame_shift + cfg.frame_length, T(0));
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t n = 0; n < cfg.frame_length; ++n) {
      const T w = static_cast<T>(cfg.window[n]);
      env[f * cfg.frame_shift + n] += w * w;
    }
  return env;
}

template <typename T>
T envelope_inverse(T e) {
  return e > T(1e-11) ? T(1) / e : T(0);
}

/// Inverse STFT of one signal from channel-first re/im [bins, frames].
template <typename T>
void istft_complex(const T* re, const T* im, std::size_t frames, const StftConfig& cfg, std::size_t out_len, T* out) {
  const std::size_t n_fft = cfg.fft_size, bins = cfg.bins();
  const auto env = window_square_envelope<T>(cfg, frames);
  std::vector<T> acc(env.size(), T(0));
  std::vector<std::complex<T>> spec(bins);
  std::vector<T> frame(n_fft);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t k = 0; k < bins; ++k) spec[k] = {re[k * frames + f], im[k * frames + f]};
    RealFft<T>::inverse(spec.data(), frame.data(), n_fft);
    for (std::size_t n = 0; n < cfg.frame_length; ++n)
      acc[f * cfg.frame_shift + n] += frame[n] * static_cast<T>(cfg.window[n]);
  }
  const std::size_t pad = cfg.pad();
  for (std::size_t i = 0; i < out_len; ++i) {
    const std::size_t j = i + pad;
    out[i] = j < acc.size() ? acc[j] * envelope_inverse(env[j]) : T(0);
  }
}

}  // namespace detail

/// Center-padded STFT. frames = len / shift + 1; phase of a zero bin is 0.
template <typename T>
Spectra<T> stft(std::span<const T> waveform, const StftConfig& cfg = {}) {
  cfg.validate();
  if (waveform.empty()) throw DspError("stft: empty waveform");
  const std::size_t frames = cfg.num_frames(waveform.size()), bins = cfg.bins();
  std::vector<T> re(bins * frames), im(bins * frames);
  detail::stft_complex(waveform, cfg, PadMode::reflect, re.data(), im.data());
  Spectra<T> s{Tensor<T>({frames, bins}), Tensor<T>({frames, bins})};
  for (std::size_t k = 0; k < bins; ++k)
    for (std::size_t f = 0; f < frames; ++f) {
      const T r = re[k * frames + f], i = im[k * frames + f];
      s.amplitude[f * bins + k] = std::hypot(r, i);
      s.phase[f * bins + k] = numerics::principal_atan2(i, r);
    }
  return s;
}

/// Windowed overlap-add inverse with squared-window normalization, trimmed or zero-padded to out_len.
template <typename T>
std::vector<T> istft(const Spectra<T>& spectra, const StftConfig& cfg, std::size_t out_len) {
  cfg.validate();
  if (spectra.amplitude.rank() != 2 || spectra.amplitude.shape != spectra.phase.shape)
    throw DspError("istft: amplitude and phase must be matching [frames, bins] matrices");
  if (spectra.bins() != cfg.bins())
    throw DspError("istft: expected " + std::to_string(cfg.bins()) + " bins, got " + std::to_string(spectra.bins()));
  const std::size_t frames = spectra.frames(), bins = cfg.bins();
  if (frames == 0) throw DspError("istft: no frames");
  std::vector<T> re(bins * frames), im(bins * frames);
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t k = 0; k < bins; ++k) {
      const T a = spectra.amplitude[f * bins + k], p = spectra.phase[f * bins + k];
      re[k * frames + f] = a * std::cos(p);
      im[k * frames + f] = a * std::sin(p);
    }
  std::vector<T> out(out_len);
  detail::istft_complex(re.data(), im.data(), frames, cfg, out_len, out.data());
  return out;
}

/// ln(max(a, floor)) elementwise.
template <typename T>
Tensor<T> log_amplitude(const Tensor<T>& amplitude, T floor = T(1e-5)) {
  Tensor<T> out(amplitude.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(amplitude[i], floor));
  return out;
}

}  // namespace bivocoder::dsp
