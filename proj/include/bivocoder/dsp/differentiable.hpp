#pragma once

#include "bivocoder/dsp/mel.hpp"
#include "bivocoder/numerics/conv.hpp"
#include "bivocoder/numerics/ops.hpp"

namespace bivocoder::dsp {

using numerics::Node;
using numerics::Var;

template <typename T>
struct ComplexVar {
  Var<T> re;  // [batch, bins, frames]
  Var<T> im;
};

/// Differentiable STFT of [batch, length] into channel-first real/imaginary parts.
template <typename T>
ComplexVar<T> stft_var(const Var<T>& x, const StftConfig& cfg, PadMode mode = PadMode::reflect) {
  cfg.validate();
  numerics::require_dims(x.shape().size() == 2 && x.dim(1) >= 1, "stft_var: input must be [batch, length]");
  const std::size_t batch = x.dim(0), len = x.dim(1), bins = cfg.bins(), frames = cfg.num_frames(len);
  const std::size_t plane = bins * frames;
  Tensor<T> out({batch, 2, bins, frames});
  for (std::size_t b = 0; b < batch; ++b) {
    T* base = out.ptr() + b * 2 * plane;
    detail::stft_complex(std::span<const T>(x.value().ptr() + b * len, len), cfg, mode, base, base + plane);
  }
  auto stacked = numerics::make_result<T>(std::move(out), {x}, [=](Node<T>& self) {
    T* gx = self.parent_grad(0);
    if (!gx) return;
    const std::size_t n_fft = cfg.fft_size;
    const long long pad = static_cast<long long>(cfg.pad());
    std::vector<std::complex<T>> spec(bins);
    std::vector<T> frame(n_fft);
    for (std::size_t b = 0; b < batch; ++b) {
      const T* g_re = self.grad.data() + b * 2 * plane;
      const T* g_im = g_re + plane;
      T* gxb = gx + b * len;
      for (std::size_t f = 0; f < frames; ++f) {
        // Adjoint of the half-spectrum real DFT, via a scaled inverse transform.
        for (std::size_t k = 0; k < bins; ++k) {
          const T s = (k == 0 || k == bins - 1) ? T(1) : T(0.5);
          spec[k] = {g_re[k * frames + f] * s, g_im[k * frames + f] * s};
        }
        RealFft<T>::inverse(spec.data(), frame.data(), n_fft);
        const long long start = static_cast<long long>(f * cfg.frame_shift) - pad;
        for (std::size_t n = 0; n < cfg.frame_length; ++n) {
          bool valid;
          const std::size_t src = detail::padded_source(start + static_cast<long long>(n), len, mode, valid);
          if (valid) gxb[src] += frame[n] * static_cast<T>(n_fft) * static_cast<T>(cfg.window[n]);
        }
      }
    }
  });
  const numerics::Shape part{batch, bins, frames};
  return {numerics::reshape(numerics::narrow(stacked, 1, 0, 1), part),
          numerics::reshape(numerics::narrow(stacked, 1, 1, 1), part)};
}

/// Differentiable inverse STFT: real/imaginary [batch, bins, frames] -> [batch, out_len].
template <typename T>
Var<T> istft_var(const Var<T>& re, const Var<T>& im, const StftConfig& cfg, std::size_t out_len) {
  cfg.validate();
  numerics::require_dims(re.shape() == im.shape() && re.shape().size() == 3,
                         "istft_var: real and imaginary parts must be matching [batch, bins, frames]");
  numerics::require_dims(re.dim(1) == cfg.bins(), "istft_var: expected " + std::to_string(cfg.bins()) + " bins");
  const std::size_t batch = re.dim(0), bins = cfg.bins(), frames = re.dim(2), plane = bins * frames;
  numerics::require_dims(frames >= 1, "istft_var: no frames");
  Tensor<T> out({batch, out_len});
  for (std::size_t b = 0; b < batch; ++b)
    detail::istft_complex(re.value().ptr() + b * plane, im.value().ptr() + b * plane, frames, cfg, out_len,
                          out.ptr() + b * out_len);
  return numerics::make_result<T>(std::move(out), {re, im}, [=](Node<T>& self) {
    T* g_re = self.parent_grad(0);
    T* g_im = self.parent_grad(1);
    if (!g_re && !g_im) return;
    const std::size_t n_fft = cfg.fft_size, pad = cfg.pad();
    const auto env = detail::window_square_envelope<T>(cfg, frames);
    std::vector<T> acc(env.size());
    std::vector<T> frame(n_fft, T(0));
    std::vector<std::complex<T>> spec(bins);
    const T inv_n = T(1) / static_cast<T>(n_fft);
    for (std::size_t b = 0; b < batch; ++b) {
      std::fill(acc.begin(), acc.end(), T(0));
      for (std::size_t i = 0; i < out_len; ++i) {
        const std::size_t j = i + pad;
        if (j < acc.size()) acc[j] = self.grad[b * out_len + i] * detail::envelope_inverse(env[j]);
      }
      for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t n = 0; n < cfg.frame_length; ++n)
          frame[n] = acc[f * cfg.frame_shift + n] * static_cast<T>(cfg.window[n]);
        RealFft<T>::forward(frame.data(), spec.data(), n_fft);
        for (std::size_t k = 0; k < bins; ++k) {
          const T c = (k == 0 || k == bins - 1) ? inv_n : T(2) * inv_n;
          const std::size_t idx = b * plane + k * frames + f;
          if (g_re) g_re[idx] += c * spec[k].real();
          if (g_im && k != 0 && k != bins - 1) g_im[idx] += c * spec[k].imag();
        }
      }
    }
  });
}

/// Mel filterbank as a frozen [n_mels, bins, 1] kernel for use with conv1d.
template <typename T>
Var<T> mel_kernel(std::size_t n_mels, const StftConfig& cfg) {
  auto fb = mel_filterbank<T>(n_mels, cfg);
  fb.shape = {n_mels, cfg.bins(), 1};
  return Var<T>::constant(std::move(fb));
}

/// Differentiable log mel spectrogram, [batch, length] -> [batch, n_mels, frames].
template <typename T>
Var<T> mel_var(const Var<T>& x, const StftConfig& cfg, const Var<T>& kernel, T floor = T(1e-5)) {
  auto c = stft_var(x, cfg, PadMode::reflect);
  auto amp = numerics::magnitude(c.re, c.im);
  return numerics::log_floor(numerics::conv1d(amp, kernel, Var<T>{}), floor);
}

}  // namespace bivocoder::dsp
