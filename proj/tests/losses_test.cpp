#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "bivocoder/losses/losses.hpp"
#include "test_support.hpp"

namespace bl = bivocoder::losses;
namespace ad = bivocoder::adversary;
namespace nm = bivocoder::numerics;
using bivocoder::testing::random_tensor;
using nm::Tensor;
using nm::Var;

namespace {

constexpr double kPi = std::numbers::pi;

Var<double> cst(const Tensor<double>& t) { return Var<double>::constant(t); }

Tensor<double> shifted(Tensor<double> t, double c) {
  for (auto& v : t.data) v += c;
  return t;
}

struct Batch {
  Tensor<double> amp, phase, re, im, wave;
};

Batch random_batch(std::mt19937_64& rng, std::size_t bins, std::size_t frames, std::size_t len) {
  Batch b{random_tensor<double>({1, bins, frames}, rng, 0.1, 2.0), random_tensor<double>({1, bins, frames}, rng, -3, 3),
          Tensor<double>({1, bins, frames}), Tensor<double>({1, bins, frames}),
          random_tensor<double>({1, len}, rng, -0.5, 0.5)};
  for (std::size_t i = 0; i < b.amp.size(); ++i) {
    b.re[i] = b.amp[i] * std::cos(b.phase[i]);
    b.im[i] = b.amp[i] * std::sin(b.phase[i]);
  }
  return b;
}

bl::SpectralBatch<double> as_vars(const Batch& b, bool grad = false) {
  return {Var<double>(b.amp, grad), Var<double>(b.phase, grad), Var<double>(b.re, grad), Var<double>(b.im, grad),
          Var<double>(b.wave, grad)};
}

}  // namespace

TEST(AntiWrap, Values) {
  EXPECT_NEAR(nm::anti_wrap_value(0.0), 0.0, 1e-12);
  EXPECT_NEAR(nm::anti_wrap_value(2 * kPi), 0.0, 1e-12);
  EXPECT_NEAR(nm::anti_wrap_value(kPi), kPi, 1e-12);
  EXPECT_NEAR(nm::anti_wrap_value(3 * kPi), kPi, 1e-12);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-20, 20);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng);
    const double a = nm::anti_wrap_value(x);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, kPi + 1e-12);
    EXPECT_NEAR(nm::anti_wrap_value(-x), a, 1e-9);
    EXPECT_NEAR(nm::anti_wrap_value(x + 2 * kPi * (i % 7 - 3)), a, 1e-9);
  }
}

TEST(AmplitudeLoss, Examples) {
  std::mt19937_64 rng(2);
  auto a = random_tensor<double>({1, 6, 5}, rng, 0.01, 3.0);
  EXPECT_DOUBLE_EQ(bl::amplitude_loss(cst(a), cst(a)).item(), 0.0);
  auto scaled = a;
  for (auto& v : scaled.data) v *= std::numbers::e;
  EXPECT_NEAR(bl::amplitude_loss(cst(a), cst(scaled)).item(), 1.0, 1e-12);
  EXPECT_GE(bl::amplitude_loss(cst(scaled), cst(random_tensor<double>({1, 6, 5}, rng, 0, 1))).item(), 0.0);
  EXPECT_THROW(bl::amplitude_loss(cst(a), cst(Tensor<double>({1, 6, 4}))), nm::DimensionError);
}

TEST(PhaseLoss, Examples) {
  std::mt19937_64 rng(3);
  auto p = random_tensor<double>({2, 7, 9}, rng, -kPi, kPi);
  EXPECT_DOUBLE_EQ(bl::phase_loss(cst(p), cst(p)).item(), 0.0);
  EXPECT_NEAR(bl::phase_loss(cst(p), cst(shifted(p, 2 * kPi))).item(), 0.0, 1e-12);
  EXPECT_NEAR(bl::phase_loss(cst(p), cst(shifted(p, -6 * kPi))).item(), 0.0, 1e-12);
  // Constant offset of pi: only the instantaneous term survives.
  EXPECT_NEAR(bl::phase_loss(cst(p), cst(shifted(p, kPi))).item(), kPi, 1e-12);
  EXPECT_THROW(bl::phase_loss(cst(p), cst(Tensor<double>({2, 7, 8}))), nm::DimensionError);
}

TEST(PhaseLoss, TermsByHand) {
  // [bins=2, frames=2]; pred differs from truth only in one entry, by 0.5.
  Tensor<double> t({2, 2}, {0.1, 0.2, 0.3, 0.4});
  Tensor<double> q({2, 2}, {0.1, 0.2, 0.3, 0.9});
  // IP: 0.5 / 4. GD (along bins): column diffs of entry 3 -> 0.5 / 2. IAF (along frames): 0.5 / 2.
  EXPECT_NEAR(bl::phase_loss(cst(t), cst(q)).item(), 0.125 + 0.25 + 0.25, 1e-12);
}

TEST(ComplexLoss, Examples) {
  std::mt19937_64 rng(4);
  auto phase = random_tensor<double>({1, 5, 8}, rng, -kPi, kPi);
  Tensor<double> re(phase.shape), im(phase.shape), re2(phase.shape), im2(phase.shape);
  for (std::size_t i = 0; i < phase.size(); ++i) {
    re[i] = std::cos(phase[i]);
    im[i] = std::sin(phase[i]);
    re2[i] = std::cos(phase[i] + kPi);
    im2[i] = std::sin(phase[i] + kPi);
  }
  EXPECT_DOUBLE_EQ(bl::complex_loss(cst(re), cst(im), cst(re), cst(im)).item(), 0.0);
  EXPECT_NEAR(bl::complex_loss(cst(re), cst(im), cst(re2), cst(im2)).item(), 4.0, 1e-12);
}

TEST(MelLoss, Examples) {
  bl::MelSetup<double> mel;
  std::mt19937_64 rng(5);
  auto x = random_tensor<double>({1, 1200}, rng, -0.5, 0.5);
  auto y = random_tensor<double>({1, 1200}, rng, -0.5, 0.5);
  EXPECT_DOUBLE_EQ(bl::mel_loss(cst(x), cst(x), mel).item(), 0.0);
  const double d = bl::mel_loss(cst(x), cst(y), mel).item();
  EXPECT_GT(d, 0.0);
  auto nx = x, ny = y;
  for (auto& v : nx.data) v = -v;
  for (auto& v : ny.data) v = -v;
  EXPECT_NEAR(bl::mel_loss(cst(nx), cst(ny), mel).item(), d, 1e-12);
  EXPECT_THROW(bl::mel_loss(cst(x), cst(Tensor<double>({1, 1199})), mel), nm::DimensionError);
}

TEST(GeneratorTotal, PerfectReconstructionWithConfidentFake) {
  std::mt19937_64 rng(6);
  auto b = random_batch(rng, 513, 6, 200);
  auto truth = as_vars(b);
  std::vector<ad::DiscriminatorOutput<double>> real{{cst(Tensor<double>({1, 1, 3, 2}, 0.3)), {cst(b.amp)}}};
  std::vector<ad::DiscriminatorOutput<double>> fake{{cst(Tensor<double>({1, 1, 3, 2}, 1.0)), {cst(b.amp)}}};
  bl::MelSetup<double> mel;
  auto g = bl::generator_total(truth, truth, mel, bl::LossWeights{}, &real, &fake);
  EXPECT_DOUBLE_EQ(g.report.total, 0.0);
}

TEST(GeneratorTotal, ZeroWeightsAndConsistency) {
  std::mt19937_64 rng(7);
  auto t = random_batch(rng, 513, 6, 200), p = random_batch(rng, 513, 6, 200);
  std::vector<ad::DiscriminatorOutput<double>> real{{cst(random_tensor<double>({1, 1, 3, 2}, rng)), {cst(t.amp)}}};
  std::vector<ad::DiscriminatorOutput<double>> fake{{cst(random_tensor<double>({1, 1, 3, 2}, rng)), {cst(p.amp)}}};
  bl::MelSetup<double> mel;
  bl::LossWeights zero{0, 0, 0, 0, 0, 0};
  EXPECT_DOUBLE_EQ(bl::generator_total(as_vars(t), as_vars(p), mel, zero, &real, &fake).report.total, 0.0);

  bl::LossWeights w;
  auto g = bl::generator_total(as_vars(t), as_vars(p), mel, w, &real, &fake);
  const auto& r = g.report;
  const double sum = w.amplitude * r.amplitude + w.phase * r.phase + w.complex * r.complex + w.mel * r.mel +
                     w.adversarial * r.adversarial + w.feature_matching * r.feature_matching;
  EXPECT_NEAR(r.total, sum, 1e-9);
  for (auto [name, v] : r.terms()) EXPECT_GT(v, 0.0) << name;
}

TEST(GeneratorTotal, NonFiniteTermNamed) {
  std::mt19937_64 rng(8);
  auto t = random_batch(rng, 513, 4, 160), p = t;
  p.re[3] = std::numeric_limits<double>::quiet_NaN();
  bl::MelSetup<double> mel;
  try {
    bl::generator_total(as_vars(t), as_vars(p), mel, bl::LossWeights{});
    FAIL() << "expected NonFiniteLoss";
  } catch (const bl::NonFiniteLoss& e) {
    EXPECT_EQ(e.term(), "complex");
  }
  EXPECT_THROW(bl::LossWeights({-1, 0, 0, 0, 0, 0}).validate(), std::invalid_argument);
}

TEST(GeneratorTotal, GradientWrtPredictedSpectra) {
  std::mt19937_64 rng(9);
  auto t = random_batch(rng, 513, 3, 100), p = random_batch(rng, 513, 3, 100);
  auto truth = as_vars(t);
  // Small predicted spectra and waveform, perturbed as leaves.
  auto pred = as_vars(p, true);
  bl::MelSetup<double> mel;
  auto build = [&] { return bl::generator_total(truth, pred, mel, bl::LossWeights{}).total; };
  std::vector<Var<double>> leaves{pred.amplitude, pred.phase, pred.re, pred.im, pred.waveform};
  auto picks = bivocoder::testing::sample_entries(leaves, 400, rng);
  auto r = bivocoder::testing::check_gradients(build, leaves, picks);
  EXPECT_LT(r.max_rel_error(), 1e-4) << r;
}
