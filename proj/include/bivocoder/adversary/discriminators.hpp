#pragma once

#include <random>
#include <string>
#include <vector>

#include "bivocoder/dsp/differentiable.hpp"
#include "bivocoder/model/config.hpp"
#include "bivocoder/model/layers.hpp"

namespace bivocoder::adversary {

using model::Conv2d;
using model::ParamList;
using numerics::Conv2dParams;
using numerics::Var;

/// Score map plus the activations that fed it.
template <typename T>
struct DiscriminatorOutput {
  Var<T> score;
  std::vector<Var<T>> features;
};

/// Waveform folded into [batch, 1, length / period, period], then (5, 1) convs striding over time.
template <typename T>
struct PeriodDiscriminator {
  std::size_t period = 2;
  std::vector<Conv2d<T>> convs;
  Conv2d<T> post;
  T slope = T(0.1);

  PeriodDiscriminator() = default;
  PeriodDiscriminator(std::size_t p, const std::vector<std::size_t>& channels, T slope_, std::mt19937_64& rng)
      : period(p), slope(slope_) {
    std::size_t in = 1;
    for (std::size_t i = 0; i < channels.size(); ++i) {
      const bool last = i + 1 == channels.size();
      convs.emplace_back(in, channels[i], 5, 1, Conv2dParams{last ? 1u : 3u, 1, 2, 0}, rng);
      in = channels[i];
    }
    post = Conv2d<T>(in, 1, 3, 1, Conv2dParams{1, 1, 1, 0}, rng);
  }

  DiscriminatorOutput<T> operator()(const Var<T>& wave) const {
    const std::size_t batch = wave.dim(0), len = wave.dim(1);
    const std::size_t extra = (period - len % period) % period;
    auto x = extra ? numerics::pad_reflect(wave, 1, 0, extra) : wave;
    x = numerics::reshape(x, {batch, 1, (len + extra) / period, period});
    DiscriminatorOutput<T> out;
    for (const auto& c : convs) {
      x = numerics::leaky_relu(c(x), slope);
      out.features.push_back(x);
    }
    out.score = post(x);
    return out;
  }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    for (std::size_t i = 0; i < convs.size(); ++i) convs[i].collect(prefix + ".convs." + std::to_string(i), out);
    post.collect(prefix + ".post", out);
  }
};

/// 2-D convs over the linear magnitude spectrogram laid out [batch, 1, bins, frames].
template <typename T>
struct ResolutionDiscriminator {
  dsp::StftConfig stft;
  std::vector<Conv2d<T>> convs;
  Conv2d<T> post;
  T slope = T(0.1);

  ResolutionDiscriminator() = default;
  ResolutionDiscriminator(const std::array<std::size_t, 3>& res, int sample_rate, std::size_t ch, T slope_,
                          std::mt19937_64& rng)
      : stft(dsp::StftConfig::with(sample_rate, res[2], res[1], res[0])), slope(slope_) {
    convs.emplace_back(1, ch, 9, 3, Conv2dParams{1, 1, 4, 1}, rng);
    for (int i = 0; i < 3; ++i) convs.emplace_back(ch, ch, 9, 3, Conv2dParams{2, 1, 4, 1}, rng);
    convs.emplace_back(ch, ch, 3, 3, Conv2dParams{1, 1, 1, 1}, rng);
    post = Conv2d<T>(ch, 1, 3, 3, Conv2dParams{1, 1, 1, 1}, rng);
  }

  DiscriminatorOutput<T> operator()(const Var<T>& wave) const {
    auto c = dsp::stft_var(wave, stft, dsp::PadMode::zero);
    auto mag = numerics::magnitude(c.re, c.im);
    auto x = numerics::reshape(mag, {mag.dim(0), 1, mag.dim(1), mag.dim(2)});
    DiscriminatorOutput<T> out;
    for (const auto& conv : convs) {
      x = numerics::leaky_relu(conv(x), slope);
      out.features.push_back(x);
    }
    out.score = post(x);
    return out;
  }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    for (std::size_t i = 0; i < convs.size(); ++i) convs[i].collect(prefix + ".convs." + std::to_string(i), out);
    post.collect(prefix + ".post", out);
  }
};

template <typename T>
class Discriminators {
 public:
  Discriminators() = default;
  Discriminators(const model::ModelConfig& config, std::uint64_t seed) {
    const auto& d = config.disc;
    if (d.periods.empty() || d.resolutions.empty() || d.period_channels.empty() || d.resolution_channels == 0)
      throw model::ConfigError("discriminator config: empty period or resolution set");
    std::mt19937_64 rng(seed);
    for (auto p : d.periods) {
      if (p == 0) throw model::ConfigError("discriminator config: period must be positive");
      mpd_.emplace_back(p, d.period_channels, static_cast<T>(d.leaky_slope), rng);
    }
    for (const auto& r : d.resolutions) {
      mrd_.emplace_back(r, config.stft.sample_rate, d.resolution_channels, static_cast<T>(d.leaky_slope), rng);
      mrd_.back().stft.validate();
      min_length_ = std::max(min_length_, r[1]);
    }
  }

  std::size_t min_length() const { return min_length_; }
  std::size_t period_count() const { return mpd_.size(); }
  std::size_t resolution_count() const { return mrd_.size(); }
  std::vector<PeriodDiscriminator<T>>& periods() { return mpd_; }
  std::vector<ResolutionDiscriminator<T>>& resolutions() { return mrd_; }

  /// One entry per sub-discriminator: periods first, then resolutions.
  std::vector<DiscriminatorOutput<T>> operator()(const Var<T>& wave) const {
    numerics::require_dims(wave.shape().size() == 2, "discriminate: expected [batch, length]");
    if (wave.dim(1) < min_length_)
      throw numerics::DimensionError("discriminate: input of " + std::to_string(wave.dim(1)) +
                                     " samples is too short, need at least " + std::to_string(min_length_));
    std::vector<DiscriminatorOutput<T>> out;
    for (const auto& d : mpd_) out.push_back(d(wave));
    for (const auto& d : mrd_) out.push_back(d(wave));
    return out;
  }

  ParamList<T> named_parameters() const {
    ParamList<T> out;
    for (std::size_t i = 0; i < mpd_.size(); ++i) mpd_[i].collect("mpd." + std::to_string(mpd_[i].period), out);
    for (std::size_t i = 0; i < mrd_.size(); ++i) mrd_[i].collect("mrd." + std::to_string(i), out);
    return out;
  }

  std::vector<Var<T>> parameters() const {
    std::vector<Var<T>> out;
    for (auto& [name, p] : named_parameters()) out.push_back(p);
    return out;
  }

  void set_trainable(bool on) const {
    for (auto& [name, p] : named_parameters()) Var<T>(p).set_requires_grad(on);
  }

 private:
  std::vector<PeriodDiscriminator<T>> mpd_;
  std::vector<ResolutionDiscriminator<T>> mrd_;
  std::size_t min_length_ = 0;
};

}  // namespace bivocoder::adversary
