#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bivocoder/adversary/gan_losses.hpp"
#include "bivocoder/dsp/differentiable.hpp"

namespace bivocoder::losses {

using numerics::Var;

struct LossWeights {
  double amplitude = 45.0;
  double phase = 100.0;
  double complex = 45.0;
  double mel = 45.0;
  double adversarial = 1.0;
  double feature_matching = 2.0;

  void validate() const {
    for (double w : {amplitude, phase, complex, mel, adversarial, feature_matching})
      if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("loss weights must be finite and >= 0");
  }
};

inline constexpr double kAmplitudeFloor = 1e-5;

/// Spectral losses below take tensors whose last two axes are (bins, frames).

/// Mean squared error of floored log-amplitudes.
template <typename T>
Var<T> amplitude_loss(const Var<T>& a_true, const Var<T>& a_pred) {
  numerics::detail::require_same_shape(a_true.shape(), a_pred.shape(), "amplitude_loss");
  const T floor = static_cast<T>(kAmplitudeFloor);
  return numerics::mean(numerics::square(numerics::sub(numerics::log_floor(a_true, floor), numerics::log_floor(a_pred, floor))));
}

/// Anti-wrapped instantaneous phase, group delay and instantaneous frequency errors, summed.
template <typename T>
Var<T> phase_loss(const Var<T>& p_true, const Var<T>& p_pred) {
  numerics::detail::require_same_shape(p_true.shape(), p_pred.shape(), "phase_loss");
  const std::size_t rank = p_true.shape().size();
  numerics::require_dims(rank >= 2 && p_true.dim(rank - 2) >= 2 && p_true.dim(rank - 1) >= 2,
                         "phase_loss: need at least 2 bins and 2 frames");
  const std::size_t freq = rank - 2, time = rank - 1;
  auto ip = numerics::mean(numerics::anti_wrap(numerics::sub(p_true, p_pred)));
  auto gd = numerics::mean(
      numerics::anti_wrap(numerics::sub(numerics::diff(p_true, freq), numerics::diff(p_pred, freq))));
  auto iaf = numerics::mean(
      numerics::anti_wrap(numerics::sub(numerics::diff(p_true, time), numerics::diff(p_pred, time))));
  return numerics::add(numerics::add(ip, gd), iaf);
}

/// MSE of real parts plus MSE of imaginary parts.
template <typename T>
Var<T> complex_loss(const Var<T>& re_true, const Var<T>& im_true, const Var<T>& re_pred, const Var<T>& im_pred) {
  numerics::detail::require_same_shape(re_true.shape(), re_pred.shape(), "complex_loss");
  numerics::detail::require_same_shape(im_true.shape(), im_pred.shape(), "complex_loss");
  return numerics::add(numerics::mean(numerics::square(numerics::sub(re_true, re_pred))),
                       numerics::mean(numerics::square(numerics::sub(im_true, im_pred))));
}

/// Frozen pieces of the mel loss: the STFT it is computed on and the filterbank kernel.
template <typename T>
struct MelSetup {
  dsp::StftConfig stft;
  Var<T> kernel;

  explicit MelSetup(dsp::StftConfig cfg = {}, std::size_t n_mels = 80)
      : stft(std::move(cfg)), kernel(dsp::mel_kernel<T>(n_mels, stft)) {}
};

/// Mean absolute error of log mel spectrograms, waveforms [batch, length].
template <typename T>
Var<T> mel_loss(const Var<T>& x_true, const Var<T>& x_pred, const MelSetup<T>& mel) {
  numerics::detail::require_same_shape(x_true.shape(), x_pred.shape(), "mel_loss");
  return numerics::mean(numerics::abs(numerics::sub(dsp::mel_var(x_true, mel.stft, mel.kernel),
                                                    dsp::mel_var(x_pred, mel.stft, mel.kernel))));
}

/// One side of the reconstruction comparison; spectra are [batch, bins, frames], waveform [batch, length].
template <typename T>
struct SpectralBatch {
  Var<T> amplitude, phase, re, im, waveform;
};

struct LossReport {
  double amplitude = 0, phase = 0, complex = 0, mel = 0, adversarial = 0, feature_matching = 0, total = 0;

  std::vector<std::pair<const char*, double>> terms() const {
    return {{"amplitude", amplitude}, {"phase", phase}, {"complex", complex}, {"mel", mel},
            {"adversarial", adversarial}, {"feature_matching", feature_matching}};
  }
};

template <typename T>
struct GeneratorLoss {
  Var<T> total;
  LossReport report;
};

class NonFiniteLoss : public numerics::NonFiniteError {
 public:
  NonFiniteLoss(const std::string& term) : numerics::NonFiniteError("non-finite loss term: " + term), term_(term) {}
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

/// Weighted generator objective. Adversarial terms are skipped (reported as 0) when no
/// discriminator outputs are given.
template <typename T>
GeneratorLoss<T> generator_total(const SpectralBatch<T>& truth, const SpectralBatch<T>& pred, const MelSetup<T>& mel,
                                 const LossWeights& w,
                                 const std::vector<adversary::DiscriminatorOutput<T>>* real = nullptr,
                                 const std::vector<adversary::DiscriminatorOutput<T>>* fake = nullptr) {
  w.validate();
  std::vector<Var<T>> terms{amplitude_loss(truth.amplitude, pred.amplitude), phase_loss(truth.phase, pred.phase),
                            complex_loss(truth.re, truth.im, pred.re, pred.im),
                            mel_loss(truth.waveform, pred.waveform, mel)};
  std::vector<T> weights{static_cast<T>(w.amplitude), static_cast<T>(w.phase), static_cast<T>(w.complex),
                         static_cast<T>(w.mel)};
  const bool adversarial = fake && !fake->empty();
  if (adversarial) {
    terms.push_back(adversary::hinge_g_loss(adversary::scores(*fake)));
    weights.push_back(static_cast<T>(w.adversarial));
    numerics::require_dims(real && real->size() == fake->size(),
                           "generator_total: real discriminator outputs required for feature matching");
    terms.push_back(adversary::feature_matching_loss(adversary::feature_maps(*real), adversary::feature_maps(*fake)));
    weights.push_back(static_cast<T>(w.feature_matching));
  }

  GeneratorLoss<T> out;
  double* slots[] = {&out.report.amplitude, &out.report.phase, &out.report.complex,
                     &out.report.mel, &out.report.adversarial, &out.report.feature_matching};
  const char* names[] = {"amplitude", "phase", "complex", "mel", "adversarial", "feature_matching"};
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const double v = static_cast<double>(terms[i].item());
    if (!std::isfinite(v)) throw NonFiniteLoss(names[i]);
    *slots[i] = v;
  }
  out.total = numerics::weighted_sum(terms, weights);
  out.report.total = static_cast<double>(out.total.item());
  if (!std::isfinite(out.report.total)) throw NonFiniteLoss("total");
  return out;
}

}  // namespace bivocoder::losses
