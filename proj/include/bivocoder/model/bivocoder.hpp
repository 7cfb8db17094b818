#pragma once

#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bivocoder/dsp/differentiable.hpp"
#include "bivocoder/dsp/stft.hpp"
#include "bivocoder/model/config.hpp"
#include "bivocoder/model/layers.hpp"

namespace bivocoder::model {

/// Low-rate features, [frames, dim] row-major.
template <typename T>
struct FeatureSequence {
  Tensor<T> values;
  int sample_rate = 16000;
  std::size_t frame_shift = 320;

  std::size_t frames() const { return values.dim(0); }
  std::size_t dim() const { return values.dim(1); }
};

/// Batched analysis of clean waveforms, each tensor [batch, bins, frames].
template <typename T>
struct SpectralTarget {
  Tensor<T> amplitude, log_amplitude, phase, re, im;
  std::size_t frames() const { return amplitude.dim(2); }
};

/// Generator heads, each [batch, bins, frames].
template <typename T>
struct GeneratedSpectra {
  Var<T> log_amplitude, amplitude, phase, re, im;
};

inline constexpr double kLogFloor = 1e-5;

template <typename T>
SpectralTarget<T> analyze_batch(const Tensor<T>& waves, const dsp::StftConfig& cfg) {
  numerics::require_dims(waves.rank() == 2 && waves.dim(1) >= 1, "analyze_batch: expected [batch, length]");
  const std::size_t batch = waves.dim(0), len = waves.dim(1), bins = cfg.bins(), frames = cfg.num_frames(len);
  const numerics::Shape shape{batch, bins, frames};
  SpectralTarget<T> s{Tensor<T>(shape), Tensor<T>(shape), Tensor<T>(shape), Tensor<T>(shape), Tensor<T>(shape)};
  const std::size_t plane = bins * frames;
  for (std::size_t b = 0; b < batch; ++b)
    dsp::detail::stft_complex(std::span<const T>(waves.ptr() + b * len, len), cfg, dsp::PadMode::reflect,
                              s.re.ptr() + b * plane, s.im.ptr() + b * plane);
  for (std::size_t i = 0; i < s.re.size(); ++i) {
    s.amplitude[i] = std::hypot(s.re[i], s.im[i]);
    s.log_amplitude[i] = std::log(std::max(s.amplitude[i], static_cast<T>(kLogFloor)));
    s.phase[i] = numerics::principal_atan2(s.im[i], s.re[i]);
  }
  return s;
}

template <typename T>
struct Branch {
  Conv1d<T> input;
  std::vector<ConvNeXtV2Block<T>> blocks;

  void collect_blocks(const std::string& prefix, ParamList<T>& out) const {
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(prefix + ".blocks." + std::to_string(i), out);
  }

  Var<T> run_blocks(Var<T> h) const {
    for (const auto& b : blocks) h = b(h);
    return h;
  }
};

template <typename T>
struct ExtractorBranch : Branch<T> {
  Conv1d<T> output;
  Conv1d<T> down;

  ExtractorBranch() = default;
  ExtractorBranch(const ModelConfig& c, std::mt19937_64& rng) {
    const std::size_t C = c.channels;
    this->input = Conv1d<T>::same(c.stft.bins(), C, c.kernel, rng);
    for (std::size_t i = 0; i < c.blocks; ++i)
      this->blocks.emplace_back(C, c.expansion, c.kernel, static_cast<T>(c.norm_eps), rng);
    output = Conv1d<T>::same(C, C, c.kernel, rng);
    down = Conv1d<T>(C, C, c.rate, rng, c.rate);
  }

  Var<T> operator()(const Var<T>& x) const { return down(output(this->run_blocks(this->input(x)))); }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    this->input.collect(prefix + ".input", out);
    this->collect_blocks(prefix, out);
    output.collect(prefix + ".output", out);
    down.collect(prefix + ".down", out);
  }
};

template <typename T>
struct GeneratorBranch : Branch<T> {
  ConvTranspose1d<T> up;

  GeneratorBranch() = default;
  GeneratorBranch(const ModelConfig& c, std::mt19937_64& rng) {
    const std::size_t C = c.channels;
    this->input = Conv1d<T>::same(C, C, c.kernel, rng);
    up = ConvTranspose1d<T>(C, C, c.rate, c.rate, rng);
    for (std::size_t i = 0; i < c.blocks; ++i)
      this->blocks.emplace_back(C, c.expansion, c.kernel, static_cast<T>(c.norm_eps), rng);
  }

  Var<T> operator()(const Var<T>& x) const { return this->run_blocks(up(this->input(x))); }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    this->input.collect(prefix + ".input", out);
    up.collect(prefix + ".up", out);
    this->collect_blocks(prefix, out);
  }
};

/// Spectra -> features, two branches fused by a final conv.
template <typename T>
struct FeatureExtractor {
  ExtractorBranch<T> amplitude, phase;
  Conv1d<T> fusion;
  std::size_t rate = 8;

  FeatureExtractor() = default;
  FeatureExtractor(const ModelConfig& c, std::mt19937_64& rng)
      : amplitude(c, rng), phase(c, rng), fusion(Conv1d<T>::same(2 * c.channels, c.feature_dim, c.kernel, rng)),
        rate(c.rate) {}

  /// log_amp, phase: [batch, bins, frames] -> [batch, feature_dim, ceil(frames / rate)].
  Var<T> operator()(const Var<T>& log_amp, const Var<T>& ph) const {
    const std::size_t frames = log_amp.dim(2);
    const std::size_t padded = (frames + rate - 1) / rate * rate;
    auto a = amplitude(numerics::pad_replicate_right(log_amp, 2, padded));
    auto p = phase(numerics::pad_replicate_right(ph, 2, padded));
    return fusion(numerics::concat<T>({a, p}, 1));
  }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    amplitude.collect(prefix + ".amplitude", out);
    phase.collect(prefix + ".phase", out);
    fusion.collect(prefix + ".fusion", out);
  }
};

/// Features -> amplitude and phase spectra at the full frame rate.
template <typename T>
struct WaveformGenerator {
  Conv1d<T> expand;
  GeneratorBranch<T> amplitude, phase;
  Conv1d<T> amplitude_head, real_head, imag_head;
  std::size_t channels = 0;

  WaveformGenerator() = default;
  WaveformGenerator(const ModelConfig& c, std::mt19937_64& rng)
      : expand(Conv1d<T>::same(c.feature_dim, 2 * c.channels, c.kernel, rng)),
        amplitude(c, rng),
        phase(c, rng),
        amplitude_head(Conv1d<T>::same(c.channels, c.stft.bins(), c.kernel, rng)),
        real_head(Conv1d<T>::same(c.channels, c.stft.bins(), c.kernel, rng)),
        imag_head(Conv1d<T>::same(c.channels, c.stft.bins(), c.kernel, rng)),
        channels(c.channels) {}

  GeneratedSpectra<T> operator()(const Var<T>& features) const {
    auto h = expand(features);
    auto a = amplitude(numerics::narrow(h, 1, 0, channels));
    auto p = phase(numerics::narrow(h, 1, channels, channels));
    GeneratedSpectra<T> g;
    g.log_amplitude = amplitude_head(a);
    g.amplitude = numerics::exp(g.log_amplitude);
    g.phase = numerics::atan2(imag_head(p), real_head(p));
    g.re = numerics::mul(g.amplitude, numerics::cos(g.phase));
    g.im = numerics::mul(g.amplitude, numerics::sin(g.phase));
    return g;
  }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    expand.collect(prefix + ".expand", out);
    amplitude.collect(prefix + ".amplitude", out);
    phase.collect(prefix + ".phase", out);
    amplitude_head.collect(prefix + ".amplitude_head", out);
    real_head.collect(prefix + ".real_head", out);
    imag_head.collect(prefix + ".imag_head", out);
  }
};

template <typename T>
class BiVocoder {
 public:
  explicit BiVocoder(ModelConfig config = ModelConfig::base(), std::uint64_t seed = 0) : config_(std::move(config)) {
    config_.stft.validate();
    if (config_.channels == 0 || config_.expansion == 0 || config_.feature_dim == 0 || config_.rate == 0)
      throw ConfigError("model config: channels, expansion, feature_dim and rate must be positive");
    if (config_.kernel % 2 == 0) throw ConfigError("model config: kernel must be odd");
    std::mt19937_64 rng(seed);
    extractor_ = FeatureExtractor<T>(config_, rng);
    generator_ = WaveformGenerator<T>(config_, rng);
  }

  const ModelConfig& config() const { return config_; }
  const dsp::StftConfig& stft() const { return config_.stft; }
  FeatureExtractor<T>& extractor() { return extractor_; }
  WaveformGenerator<T>& generator() { return generator_; }

  ParamList<T> named_parameters() const {
    ParamList<T> out;
    extractor_.collect("extractor", out);
    generator_.collect("generator", out);
    return out;
  }

  std::vector<Var<T>> parameters() const {
    std::vector<Var<T>> out;
    for (auto& [name, p] : named_parameters()) out.push_back(p);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (auto& [name, p] : named_parameters()) n += p.size();
    return n;
  }

  // Graph-level entry points used by training.

  Var<T> encode(const SpectralTarget<T>& s) const {
    return extractor_(Var<T>::constant(s.log_amplitude), Var<T>::constant(s.phase));
  }

  GeneratedSpectra<T> decode(const Var<T>& features) const {
    numerics::require_dims(features.shape().size() == 3 && features.dim(1) == config_.feature_dim,
                           "decode: expected features [batch, " + std::to_string(config_.feature_dim) +
                               ", frames], got " + numerics::shape_string(features.shape()));
    return generator_(features);
  }

  /// Generated spectra truncated to `frames` and inverted to [batch, out_len].
  Var<T> waveform(const GeneratedSpectra<T>& g, std::size_t frames, std::size_t out_len) const {
    auto re = numerics::narrow(g.re, 2, 0, frames);
    auto im = numerics::narrow(g.im, 2, 0, frames);
    return dsp::istft_var(re, im, config_.stft, out_len);
  }

  // Plain-tensor inference API.

  FeatureSequence<T> extract_features(std::span<const T> wave) const {
    numerics::NoGradGuard no_grad;
    require_length(wave.size());
    Tensor<T> batch({1, wave.size()}, std::vector<T>(wave.begin(), wave.end()));
    auto f = encode(analyze_batch(batch, config_.stft));
    const std::size_t dim = f.dim(1), frames = f.dim(2);
    FeatureSequence<T> seq{Tensor<T>({frames, dim}), config_.stft.sample_rate, config_.feature_shift()};
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t d = 0; d < dim; ++d) seq.values[t * dim + d] = f.value()[d * frames + t];
    return seq;
  }

  dsp::Spectra<T> generate_spectra(const FeatureSequence<T>& features) const {
    numerics::NoGradGuard no_grad;
    auto g = decode(to_var(features));
    const std::size_t bins = g.amplitude.dim(1), frames = g.amplitude.dim(2);
    dsp::Spectra<T> s{Tensor<T>({frames, bins}), Tensor<T>({frames, bins})};
    for (std::size_t k = 0; k < bins; ++k)
      for (std::size_t t = 0; t < frames; ++t) {
        s.amplitude[t * bins + k] = g.amplitude.value()[k * frames + t];
        s.phase[t * bins + k] = g.phase.value()[k * frames + t];
      }
    return s;
  }

  std::vector<T> synthesize(const FeatureSequence<T>& features, std::size_t out_len) const {
    numerics::NoGradGuard no_grad;
    auto g = decode(to_var(features));
    auto w = dsp::istft_var(g.re, g.im, config_.stft, out_len);
    return {w.value().data.begin(), w.value().data.end()};
  }

  std::vector<T> analysis_synthesis(std::span<const T> wave) const {
    return synthesize(extract_features(wave), wave.size());
  }

  void require_length(std::size_t len) const {
    if (len < config_.stft.frame_length)
      throw dsp::DspError("input too short: " + std::to_string(len) + " samples, need at least " +
                          std::to_string(config_.stft.frame_length));
  }

 private:
  Var<T> to_var(const FeatureSequence<T>& seq) const {
    if (seq.values.rank() != 2 || seq.dim() != config_.feature_dim)
      throw numerics::DimensionError("features: expected dimension " + std::to_string(config_.feature_dim) +
                                     ", got shape " + numerics::shape_string(seq.values.shape));
    if (seq.frames() == 0) throw numerics::DimensionError("features: no frames");
    const std::size_t frames = seq.frames(), dim = seq.dim();
    Tensor<T> t({1, dim, frames});
    for (std::size_t f = 0; f < frames; ++f)
      for (std::size_t d = 0; d < dim; ++d) t[d * frames + f] = seq.values[f * dim + d];
    return Var<T>::constant(std::move(t));
  }

  ModelConfig config_;
  FeatureExtractor<T> extractor_;
  WaveformGenerator<T> generator_;
};

}  // namespace bivocoder::model
