#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bivocoder/adversary/gan_losses.hpp"
#include "bivocoder/losses/losses.hpp"
#include "bivocoder/metrics/metrics.hpp"
#include "bivocoder/model/bivocoder.hpp"
#include "bivocoder/model/checkpoint.hpp"
#include "bivocoder/training/config.hpp"
#include "bivocoder/training/dataset.hpp"

namespace bivocoder::training {

using numerics::Tensor;
using numerics::Var;

/// Ground truth and generator output for one batch, both sides in the same layout.
template <typename T>
struct Reconstruction {
  losses::SpectralBatch<T> truth, pred;
};

/// Analysis of the clean batch, then extractor -> generator -> spectra cut to the true frame count
/// -> differentiable inverse STFT at the batch length.
template <typename T>
Reconstruction<T> reconstruct(const model::BiVocoder<T>& m, const Tensor<T>& batch) {
  auto target = model::analyze_batch(batch, m.stft());
  const std::size_t frames = target.frames(), len = batch.dim(1);
  auto g = m.decode(m.encode(target));
  Reconstruction<T> r;
  r.truth = {Var<T>::constant(target.amplitude), Var<T>::constant(target.phase), Var<T>::constant(target.re),
             Var<T>::constant(target.im), Var<T>::constant(batch)};
  r.pred.amplitude = numerics::narrow(g.amplitude, 2, 0, frames);
  r.pred.phase = numerics::narrow(g.phase, 2, 0, frames);
  r.pred.re = numerics::narrow(g.re, 2, 0, frames);
  r.pred.im = numerics::narrow(g.im, 2, 0, frames);
  r.pred.waveform = dsp::istft_var(r.pred.re, r.pred.im, m.stft(), len);
  return r;
}

/// Full generator objective for one batch. Discriminators are used as given; callers decide whether
/// their parameters take part in the graph.
template <typename T>
losses::GeneratorLoss<T> generator_objective(const model::BiVocoder<T>& m, const adversary::Discriminators<T>* d,
                                             const Tensor<T>& batch, const losses::MelSetup<T>& mel,
                                             const losses::LossWeights& w) {
  auto r = reconstruct(m, batch);
  if (!d) return losses::generator_total(r.truth, r.pred, mel, w);
  auto real = (*d)(r.truth.waveform);
  auto fake = (*d)(r.pred.waveform);
  return losses::generator_total(r.truth, r.pred, mel, w, &real, &fake);
}

struct StepReport {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  double lr = 0;
  double d_loss = 0;
  losses::LossReport g;
  double wall_seconds = 0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["step"] = step;
    j["epoch"] = epoch;
    j["lr"] = lr;
    j["d_loss"] = d_loss;
    j["g_total"] = g.total;
    for (auto [name, v] : g.terms()) j[name] = v;
    j["wall_time"] = wall_seconds;
    return j;
  }
};

struct ValidationReport {
  std::uint64_t step = 0;
  double snr = 0;
  double mel_loss = 0;
  std::size_t utterances = 0;
};

/// Raised when a step produced a non-finite loss, gradient or parameter. All parameters and
/// optimizer state are rolled back to their values before the step.
class StepAborted : public numerics::NonFiniteError {
 public:
  StepAborted(std::uint64_t step, const std::string& why)
      : numerics::NonFiniteError("training step " + std::to_string(step) + " aborted: " + why) {}
};

template <typename T = float>
class Trainer {
 public:
  Trainer(TrainConfig cfg, std::vector<Utterance> data)
      : cfg_(std::move(cfg)),
        model_(cfg_.model_config(), cfg_.seed),
        disc_(cfg_.model_config(), cfg_.seed ^ 0x9e3779b97f4a7c15ull),
        g_params_(model_.parameters()),
        d_params_(disc_.parameters()),
        g_opt_(g_params_, cfg_.optimizer),
        d_opt_(d_params_, cfg_.optimizer),
        rng_(cfg_.seed),
        mel_(model_.stft()) {
    cfg_.validate();
    if (data.empty()) throw DatasetError("no training data");
    std::size_t n_val = 0;
    if (cfg_.validation_split > 0.0 && data.size() >= 2)
      n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(cfg_.validation_split * data.size())), 1,
                                      data.size() - 1);
    val_.assign(std::make_move_iterator(data.end() - static_cast<std::ptrdiff_t>(n_val)),
                std::make_move_iterator(data.end()));
    data.resize(data.size() - n_val);
    train_ = std::move(data);
    if (cfg_.adversarial() && cfg_.crop < disc_.min_length())
      throw TrainConfigError("crop of " + std::to_string(cfg_.crop) + " samples is shorter than the discriminator minimum " +
                             std::to_string(disc_.min_length()));
    steps_per_epoch_ = (train_.size() + cfg_.batch_size - 1) / cfg_.batch_size;
  }

  const TrainConfig& config() const { return cfg_; }
  model::BiVocoder<T>& model() { return model_; }
  adversary::Discriminators<T>& discriminators() { return disc_; }
  std::uint64_t step_count() const { return step_; }
  std::uint64_t epoch() const { return step_ / steps_per_epoch_; }
  double lr() const { return cfg_.optimizer.lr * std::pow(cfg_.lr_decay, static_cast<double>(epoch())); }
  const std::vector<Utterance>& training_set() const { return train_; }
  const std::vector<Utterance>& validation_set() const { return val_; }

  /// One discriminator update (skipped when frozen or unused) then one generator update on a fresh batch.
  StepReport step() {
    const auto t0 = std::chrono::steady_clock::now();
    StepReport rep;
    rep.step = step_ + 1;
    rep.epoch = epoch();
    rep.lr = lr();
    g_opt_.hyper.lr = d_opt_.hyper.lr = rep.lr;

    const Tensor<float> raw = sample_batch(train_, cfg_.batch_size, cfg_.crop, rng_);
    Tensor<T> batch(raw.shape);
    std::copy(raw.data.begin(), raw.data.end(), batch.data.begin());

    const auto g_snapshot = snapshot(g_params_);
    const auto d_snapshot = snapshot(d_params_);
    const auto g_opt_snapshot = g_opt_;
    const auto d_opt_snapshot = d_opt_;
    try {
      auto r = reconstruct(model_, batch);
      const bool adversarial = cfg_.adversarial();
      if (adversarial && !cfg_.freeze_discriminators) {
        auto real = disc_(r.truth.waveform);
        auto fake = disc_(r.pred.waveform.detach());
        auto d_loss = adversary::hinge_d_loss(adversary::scores(real), adversary::scores(fake));
        rep.d_loss = static_cast<double>(d_loss.item());
        if (!std::isfinite(rep.d_loss)) throw losses::NonFiniteLoss("discriminator");
        zero_grads(d_params_);
        numerics::backward(d_loss);
        numerics::adamw_step(d_params_, d_opt_);
      }

      // D stays frozen through the G backward pass so its grads are never touched.
      disc_.set_trainable(false);
      try {
        losses::GeneratorLoss<T> g;
        if (adversarial) {
          auto real = disc_(r.truth.waveform);
          auto fake = disc_(r.pred.waveform);
          g = losses::generator_total(r.truth, r.pred, mel_, cfg_.weights, &real, &fake);
        } else {
          g = losses::generator_total(r.truth, r.pred, mel_, cfg_.weights);
        }
        rep.g = g.report;
        zero_grads(g_params_);
        numerics::backward(g.total);
      } catch (...) {
        disc_.set_trainable(true);
        throw;
      }
      disc_.set_trainable(true);
      numerics::adamw_step(g_params_, g_opt_);
      for (const auto* list : {&g_params_, &d_params_})
        for (const auto& p : *list)
          if (!numerics::all_finite<T>(p.data())) throw numerics::NonFiniteError("non-finite parameter after update");
    } catch (const numerics::NonFiniteError& e) {
      restore(g_params_, g_snapshot);
      restore(d_params_, d_snapshot);
      g_opt_ = g_opt_snapshot;
      d_opt_ = d_opt_snapshot;
      zero_grads(g_params_);
      zero_grads(d_params_);
      throw StepAborted(rep.step, e.what());
    }
    zero_grads(g_params_);
    zero_grads(d_params_);
    ++step_;
    ema_total_ = step_ == 1 ? rep.g.total : 0.98 * ema_total_ + 0.02 * rep.g.total;
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
  }

  double smoothed_loss() const { return ema_total_; }

  /// Copy-synthesis SNR and mel loss over the held-out utterances (each cut to at most `max_samples`).
  ValidationReport validate(std::size_t max_samples = 32000) const {
    ValidationReport v{step_, 0, 0, 0};
    numerics::NoGradGuard no_grad;
    for (const auto& u : val_) {
      const std::size_t n = std::min(max_samples, u.samples.size());
      if (n < model_.stft().frame_length) continue;
      Tensor<T> batch({1, n});
      std::copy_n(u.samples.begin(), n, batch.data.begin());
      auto r = reconstruct(model_, batch);
      const auto& y = r.pred.waveform.value().data;
      v.snr += metrics::snr<T>(batch.data, y);
      v.mel_loss += static_cast<double>(losses::mel_loss(r.truth.waveform, r.pred.waveform, mel_).item());
      ++v.utterances;
    }
    if (v.utterances) {
      v.snr /= static_cast<double>(v.utterances);
      v.mel_loss /= static_cast<double>(v.utterances);
    }
    return v;
  }

  model::Checkpoint checkpoint() const {
    model::Checkpoint ck{model_.config()};
    model::append_params(ck, model_.named_parameters());
    model::append_params(ck, disc_.named_parameters());
    ck.optimizers["OPTG"] = model::to_blob(g_opt_);
    ck.optimizers["OPTD"] = model::to_blob(d_opt_);
    std::ostringstream rng;
    rng << rng_;
    nlohmann::ordered_json st;
    st["step"] = step_;
    st["rng"] = rng.str();
    st["ema_total"] = ema_total_;
    st["seed"] = cfg_.seed;
    ck.train_state = st.dump();
    return ck;
  }

  /// Restores parameters, optimizer moments, step counter and sampler state.
  void resume(const model::Checkpoint& ck) {
    if (ck.config.digest() != model_.config().digest())
      throw model::CheckpointError("checkpoint config mismatch: checkpoint was written for preset '" +
                                   ck.config.preset + "', run uses '" + model_.config().preset + "'");
    model::restore_params(ck, model_.named_parameters());
    model::restore_params(ck, disc_.named_parameters());
    auto need = [&](const char* tag) -> const model::OptimizerBlob& {
      auto it = ck.optimizers.find(tag);
      if (it == ck.optimizers.end()) throw model::CheckpointError(std::string("checkpoint has no ") + tag + " section");
      return it->second;
    };
    g_opt_ = model::from_blob<T>(need("OPTG"), g_params_);
    d_opt_ = model::from_blob<T>(need("OPTD"), d_params_);
    try {
      const auto st = nlohmann::json::parse(ck.train_state);
      step_ = st.at("step").get<std::uint64_t>();
      ema_total_ = st.at("ema_total").get<double>();
      std::istringstream rng(st.at("rng").get<std::string>());
      rng >> rng_;
      if (!rng) throw model::CheckpointError("bad sampler state");
    } catch (const nlohmann::json::exception& e) {
      throw model::CheckpointError(std::string("checkpoint training state unreadable: ") + e.what());
    }
  }

 private:
  static std::vector<std::vector<T>> snapshot(const std::vector<Var<T>>& ps) {
    std::vector<std::vector<T>> s;
    for (const auto& p : ps) s.push_back(p.value().data);
    return s;
  }
  static void restore(std::vector<Var<T>>& ps, const std::vector<std::vector<T>>& s) {
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i].mutable_value().data = s[i];
  }
  static void zero_grads(std::vector<Var<T>>& ps) {
    for (auto& p : ps) p.zero_grad();
  }

  TrainConfig cfg_;
  model::BiVocoder<T> model_;
  adversary::Discriminators<T> disc_;
  std::vector<Var<T>> g_params_, d_params_;
  numerics::AdamWState<T> g_opt_, d_opt_;
  std::mt19937_64 rng_;
  losses::MelSetup<T> mel_;
  std::vector<Utterance> train_, val_;
  std::size_t steps_per_epoch_ = 1;
  std::uint64_t step_ = 0;
  double ema_total_ = 0;
};

/// Runs (or resumes) training to `max_steps`, appending one JSON record per step to the log and
/// checkpointing every `checkpoint_interval` steps and at the end.
template <typename T = float>
std::string train(const TrainConfig& cfg, const std::string& resume_from = "",
                  const std::function<void(const StepReport&)>& on_step = {}) {
  Trainer<T> trainer(cfg, load_dataset(cfg.data_dir));
  if (!resume_from.empty())
    trainer.resume(model::load_checkpoint_file(resume_from, trainer.model().config().digest()));
  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream log(cfg.log_path(), resume_from.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw TrainConfigError("cannot open training log " + cfg.log_path());
  const auto save = [&] { model::save_checkpoint_file(trainer.checkpoint(), cfg.checkpoint_path()); };
  if (trainer.step_count() == 0) save();
  while (trainer.step_count() < cfg.max_steps) {
    const auto rep = trainer.step();
    log << rep.to_json().dump() << '\n';
    if (cfg.validation_interval && rep.step % cfg.validation_interval == 0 && !trainer.validation_set().empty()) {
      const auto v = trainer.validate();
      nlohmann::ordered_json j{{"validation_step", v.step}, {"snr", v.snr}, {"mel_loss", v.mel_loss},
                               {"utterances", v.utterances}};
      log << j.dump() << '\n';
    }
    log.flush();
    if (on_step) on_step(rep);
    if (cfg.checkpoint_interval && rep.step % cfg.checkpoint_interval == 0) save();
  }
  save();
  return cfg.checkpoint_path();
}

}  // namespace bivocoder::training
