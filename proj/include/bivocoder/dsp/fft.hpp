#pragma once

#include <complex>
#include <cstddef>

#include <unsupported/Eigen/FFT>

namespace bivocoder::dsp {

/// Real FFT helpers on top of Eigen's kissfft backend. One plan cache per thread and precision.
template <typename T>
class RealFft {
 public:
  using Complex = std::complex<T>;

  /// n real samples -> n/2 + 1 bins, unnormalized forward transform.
  static void forward(const T* in, Complex* out, std::size_t n) { engine().fwd(out, in, static_cast<Eigen::Index>(n)); }

  /// n/2 + 1 bins -> n real samples, scaled by 1/n. Imaginary parts of DC and Nyquist are ignored.
  static void inverse(const Complex* in, T* out, std::size_t n) {
    engine().inv(out, in, static_cast<Eigen::Index>(n));
    const T s = T(1) / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) out[i] *= s;
  }

 private:
  static Eigen::FFT<T>& engine() {
    thread_local Eigen::FFT<T> fft = [] {
      Eigen::FFT<T> f;
      f.SetFlag(Eigen::FFT<T>::HalfSpectrum);
      f.SetFlag(Eigen::FFT<T>::Unscaled);
      return f;
    }();
    return fft;
  }
};

}  // namespace bivocoder::dsp
