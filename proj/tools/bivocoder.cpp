#include <iostream>

#include "CLI11.hpp"
#include "bivocoder/cli/commands.hpp"

namespace cli = bivocoder::cli;

int main(int argc, char** argv) {
  CLI::App app{"bivocoder: feature extraction, synthesis, training and evaluation for a bidirectional vocoder"};
  app.require_subcommand(1);

  cli::TrainArgs train;
  auto* t = app.add_subcommand("train", "train from a config file");
  t->add_option("--config", train.config, "training config (key = value lines)")->required();
  t->add_option("--resume", train.resume, "checkpoint to resume from");

  cli::ExtractArgs extract;
  auto* e = app.add_subcommand("extract", "WAV -> feature file");
  e->add_option("--ckpt", extract.ckpt)->required();
  e->add_option("--in", extract.in, "16 kHz mono PCM16 WAV")->required();
  e->add_option("--out", extract.out, "BVF feature file")->required();

  cli::SynthArgs synth;
  std::size_t length = 0;
  auto* s = app.add_subcommand("synth", "feature file -> WAV");
  s->add_option("--ckpt", synth.ckpt)->required();
  s->add_option("--in", synth.in, "BVF feature file")->required();
  s->add_option("--out", synth.out, "output WAV")->required();
  auto* len_opt = s->add_option("--len", length, "output length in samples (default frames x shift)");

  cli::CopySynthArgs copy;
  auto* c = app.add_subcommand("copysynth", "WAV -> features -> WAV");
  c->add_option("--ckpt", copy.ckpt)->required();
  c->add_option("--in", copy.in)->required();
  c->add_option("--out", copy.out)->required();
  c->add_flag("--ref-metrics", copy.ref_metrics, "print SNR against the input");

  cli::EvalArgs eval;
  auto* v = app.add_subcommand("eval", "objective metrics over matching file names");
  v->add_option("--ref", eval.ref)->required();
  v->add_option("--deg", eval.deg)->required();
  v->add_option("--report", eval.report, "JSON report path")->required();

  cli::BenchArgs bench;
  auto* b = app.add_subcommand("bench", "synthesis real-time factor");
  b->add_option("--ckpt", bench.ckpt)->required();
  b->add_option("--seconds", bench.seconds, "audio duration per run");
  b->add_option("--repeats", bench.repeats, "timed runs after one warm-up (>= 3)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err, std::cerr, std::cerr);
    return cli::kUsage;
  }

  return cli::guarded(std::cerr, [&] {
    if (*t) return cli::cmd_train(train, std::cerr);
    if (*e) return cli::cmd_extract(extract, std::cerr);
    if (*s) {
      if (*len_opt) synth.length = length;
      return cli::cmd_synth(synth, std::cerr);
    }
    if (*c) return cli::cmd_copysynth(copy, std::cout, std::cerr);
    if (*v) return cli::cmd_eval(eval, std::cerr);
    return cli::cmd_bench(bench, std::cout, std::cerr);
  });
}
