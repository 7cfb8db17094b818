#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "bivocoder/dsp/differentiable.hpp"
#include "test_support.hpp"

namespace dsp = bivocoder::dsp;
namespace nm = bivocoder::numerics;
using bivocoder::testing::check_all_gradients;
using bivocoder::testing::random_tensor;

namespace {

template <typename T>
std::vector<T> random_signal(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<T> x(n);
  for (auto& v : x) v = static_cast<T>(u(rng));
  return x;
}

template <typename T>
double relative_l2(const std::vector<T>& a, const std::vector<T>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::pow(double(a[i]) - double(b[i]), 2);
    den += std::pow(double(a[i]), 2);
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST(StftConfig, DefaultsAndValidation) {
  dsp::StftConfig cfg;
  EXPECT_EQ(cfg.frame_length, 320u);
  EXPECT_EQ(cfg.frame_shift, 40u);
  EXPECT_EQ(cfg.fft_size, 1024u);
  EXPECT_EQ(cfg.bins(), 513u);
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_THROW(dsp::StftConfig::with(16000, 2048, 40, 1024).validate(), dsp::DspError);
  EXPECT_THROW(dsp::StftConfig::with(16000, 320, 400, 1024).validate(), dsp::DspError);
}

TEST(Stft, ZeroWaveform) {
  std::vector<double> x(1000, 0.0);
  auto s = dsp::stft<double>(x);
  EXPECT_EQ(s.frames(), 1000u / 40 + 1);
  for (double a : s.amplitude.data) EXPECT_EQ(a, 0.0);
  for (double p : s.phase.data) EXPECT_EQ(p, 0.0);
}

TEST(Stft, EmptyWaveformRejected) { EXPECT_THROW(dsp::stft<double>(std::vector<double>{}), dsp::DspError); }

TEST(Stft, ConstantSignalDcEqualsWindowSum) {
  std::vector<double> x(4000, 1.0);
  dsp::StftConfig cfg;
  auto s = dsp::stft<double>(x, cfg);
  double wsum = 0;
  for (double w : cfg.window) wsum += w;
  EXPECT_NEAR(s.amplitude[50 * 513 + 0], wsum, 1e-9);
}

TEST(Stft, BinCenteredSinePeaksAtItsBin) {
  for (std::size_t k : {5u, 64u, 200u}) {
    std::vector<double> x(8000);
    for (std::size_t n = 0; n < x.size(); ++n)
      x[n] = std::sin(2 * std::numbers::pi * double(k) * 16000.0 / 1024.0 * double(n) / 16000.0);
    auto s = dsp::stft<double>(x);
    const std::size_t f = 100;
    std::size_t best = 0;
    for (std::size_t b = 1; b < 513; ++b)
      if (s.amplitude[f * 513 + b] > s.amplitude[f * 513 + best]) best = b;
    EXPECT_EQ(best, k);
  }
}

TEST(Stft, PhaseRangeAndAmplitudeScaling) {
  auto x = random_signal<double>(3000, 9);
  auto s = dsp::stft<double>(x);
  for (double p : s.phase.data) {
    EXPECT_GT(p, -std::numbers::pi);
    EXPECT_LE(p, std::numbers::pi);
  }
  for (double a : s.amplitude.data) EXPECT_GE(a, 0.0);
  auto y = x;
  for (auto& v : y) v *= -2.5;
  auto s2 = dsp::stft<double>(y);
  for (std::size_t i = 0; i < s.amplitude.size(); ++i) EXPECT_NEAR(s2.amplitude[i], 2.5 * s.amplitude[i], 1e-9);
}

TEST(Istft, ZeroSpectraAndLinearity) {
  dsp::StftConfig cfg;
  dsp::Spectra<double> zero{nm::Tensor<double>({30, 513}), nm::Tensor<double>({30, 513})};
  for (double v : dsp::istft(zero, cfg, 1160)) EXPECT_EQ(v, 0.0);

  auto s = dsp::stft<double>(random_signal<double>(1200, 3));
  auto y1 = dsp::istft(s, cfg, 1200);
  for (auto& a : s.amplitude.data) a *= 2;
  auto y2 = dsp::istft(s, cfg, 1200);
  for (std::size_t i = 0; i < y1.size(); ++i) EXPECT_NEAR(y2[i], 2 * y1[i], 1e-12);
}

TEST(Istft, ShapeMismatchRejected) {
  dsp::Spectra<double> bad{nm::Tensor<double>({10, 257}), nm::Tensor<double>({10, 257})};
  EXPECT_THROW(dsp::istft(bad, dsp::StftConfig{}, 400), dsp::DspError);
}

TEST(Istft, RoundTripBothPrecisions) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto x64 = random_signal<double>(16000, seed);
    auto r64 = dsp::istft(dsp::stft<double>(x64), {}, x64.size());
    EXPECT_LT(relative_l2(x64, r64), 1e-6);
    auto x32 = random_signal<float>(8000 + seed * 37, seed);
    auto r32 = dsp::istft(dsp::stft<float>(x32), {}, x32.size());
    EXPECT_LT(relative_l2(x32, r32), 1e-3);
  }
  // Shorter than half a frame still reconstructs through repeated reflection.
  auto tiny = random_signal<double>(100, 4);
  EXPECT_LT(relative_l2(tiny, dsp::istft(dsp::stft<double>(tiny), {}, tiny.size())), 1e-9);
}

TEST(Istft, ColaEnvelopeConstantInInterior) {
  dsp::StftConfig cfg;
  auto env = dsp::detail::window_square_envelope<double>(cfg, 100);
  const double ref = env[cfg.frame_length];
  for (std::size_t i = cfg.frame_length; i + cfg.frame_length < env.size(); ++i) EXPECT_NEAR(env[i], ref, 1e-10);
  EXPECT_NEAR(ref, 3.0, 1e-10);  // 3/8 * 320/40
}

TEST(MelFilterbank, ShapeMonotoneCentersAndCoverage) {
  dsp::StftConfig cfg;
  auto fb = dsp::mel_filterbank<double>(80, cfg);
  EXPECT_EQ(fb.shape, (nm::Shape{80, 513}));
  auto centers = dsp::mel_center_frequencies(80, cfg);
  for (std::size_t m = 1; m < centers.size(); ++m) EXPECT_GT(centers[m], centers[m - 1]);
  for (double w : fb.data) EXPECT_GE(w, 0.0);
  for (std::size_t k = 1; k + 1 < 513; ++k) {
    bool covered = false;
    for (std::size_t m = 0; m < 80; ++m) covered = covered || fb[m * 513 + k] > 0.0;
    EXPECT_TRUE(covered) << "bin " << k;
  }
  EXPECT_THROW(dsp::mel_filterbank<double>(600, cfg), dsp::DspError);
  EXPECT_THROW(dsp::mel_filterbank<double>(0, cfg), dsp::DspError);
}

TEST(LogAmplitude, FloorAndIdentity) {
  nm::Tensor<double> a({3}, std::vector<double>{1.0, 0.0, std::numbers::e});
  auto l = dsp::log_amplitude(a);
  EXPECT_DOUBLE_EQ(l[0], 0.0);
  EXPECT_DOUBLE_EQ(l[1], std::log(1e-5));
  EXPECT_DOUBLE_EQ(l[2], 1.0);
}

TEST(MelSpectrogram, ZeroShapeAndShiftEquivariance) {
  auto zero = dsp::mel_spectrogram<double>(std::vector<double>(8000, 0.0));
  EXPECT_EQ(zero.shape, (nm::Shape{201, 80}));
  for (double v : zero.data) EXPECT_DOUBLE_EQ(v, std::log(1e-5));

  auto x = random_signal<double>(6000, 5);
  const std::size_t m = 7;
  std::vector<double> y(x.begin() + m * 40, x.end());
  auto mx = dsp::mel_spectrogram<double>(x);
  auto my = dsp::mel_spectrogram<double>(y);
  for (std::size_t f = 5; f + 5 < my.dim(0); ++f)
    for (std::size_t b = 0; b < 80; ++b) EXPECT_NEAR(my[f * 80 + b], mx[(f + m) * 80 + b], 1e-9);
}

TEST(Differentiable, ForwardMatchesPlainTransforms) {
  dsp::StftConfig cfg;
  auto x = random_signal<double>(900, 8);
  auto xv = nm::Var<double>(nm::Tensor<double>({1, x.size()}, x));
  auto c = dsp::stft_var(xv, cfg);
  auto s = dsp::stft<double>(x, cfg);
  const std::size_t frames = s.frames();
  ASSERT_EQ(c.re.shape(), (nm::Shape{1, 513, frames}));
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t k = 0; k < 513; ++k)
      EXPECT_NEAR(std::hypot(c.re.data()[k * frames + f], c.im.data()[k * frames + f]), s.amplitude[f * 513 + k], 1e-9);
  auto back = dsp::istft_var(c.re, c.im, cfg, x.size());
  EXPECT_LT(relative_l2(x, std::vector<double>(back.data().begin(), back.data().end())), 1e-9);

  auto mel = dsp::mel_var(xv, cfg, dsp::mel_kernel<double>(80, cfg));
  auto ref = dsp::mel_spectrogram<double>(x, cfg);
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t b = 0; b < 80; ++b) EXPECT_NEAR(mel.data()[b * frames + f], ref[f * 80 + b], 1e-9);
}

TEST(Differentiable, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(12);
  auto cfg = dsp::StftConfig::with(16000, 16, 4, 32);
  auto x = nm::Var<double>::parameter(random_tensor<double>({2, 37}, rng));
  auto kernel = dsp::mel_kernel<double>(6, cfg);
  auto build_stft = [&] {
    auto c = dsp::stft_var(x, cfg, dsp::PadMode::reflect);
    auto z = dsp::stft_var(x, cfg, dsp::PadMode::zero);
    auto m = dsp::mel_var(x, cfg, kernel);
    return nm::add(nm::add(nm::mean(nm::mul(c.re, c.im)), nm::mean(nm::square(z.re))), nm::mean(m));
  };
  EXPECT_LT(check_all_gradients(build_stft, {x}).max_rel_error(), 1e-4);

  auto re = nm::Var<double>::parameter(random_tensor<double>({2, 17, 9}, rng));
  auto im = nm::Var<double>::parameter(random_tensor<double>({2, 17, 9}, rng));
  auto target = nm::Var<double>(random_tensor<double>({2, 30}, rng));
  auto build_istft = [&] { return nm::mean(nm::square(nm::sub(dsp::istft_var(re, im, cfg, 30), target))); };
  EXPECT_LT(check_all_gradients(build_istft, {re, im}).max_rel_error(), 1e-4);
}
