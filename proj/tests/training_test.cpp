#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>

#include "bivocoder/training/trainer.hpp"

namespace tr = bivocoder::training;
namespace io = bivocoder::io;
namespace nm = bivocoder::numerics;
namespace fs = std::filesystem;

namespace {

std::vector<float> voiced(std::size_t n, double f0, std::uint64_t seed = 0) {
  std::vector<float> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = 0;
    for (int h = 1; h <= 6; ++h)
      v += 0.25 / h * std::sin(2 * std::numbers::pi * f0 * h * static_cast<double>(i) / 16000 + 0.3 * h + seed);
    x[i] = static_cast<float>(v);
  }
  return x;
}

fs::path fresh_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("bivocoder_train_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

tr::TrainConfig small_config(const fs::path& out) {
  tr::TrainConfig c;
  c.out_dir = out.string();
  c.crop = 1600;
  c.batch_size = 2;
  c.max_steps = 4;
  c.seed = 11;
  return c;
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream f(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(f, l);) out.push_back(l);
  return out;
}

nlohmann::json without_time(const std::string& line) {
  auto j = nlohmann::json::parse(line);
  j.erase("wall_time");
  return j;
}

}  // namespace

TEST(TrainConfig, ParsesKeysAndComments) {
  auto c = tr::TrainConfig::parse(
      "# run\n"
      "data_dir = /data/x\n"
      "batch_size=4  # inline\n"
      "\n"
      "lr = 1e-3\n"
      "lambda_mel = 30\n"
      "freeze_discriminators = true\n");
  EXPECT_EQ(c.data_dir, "/data/x");
  EXPECT_EQ(c.batch_size, 4u);
  EXPECT_DOUBLE_EQ(c.optimizer.lr, 1e-3);
  EXPECT_DOUBLE_EQ(c.weights.mel, 30);
  EXPECT_TRUE(c.freeze_discriminators);
  EXPECT_EQ(c.crop, 8000u);
}

TEST(TrainConfig, Errors) {
  auto message = [](const std::string& text) {
    try {
      tr::TrainConfig::parse(text, "run.cfg");
    } catch (const tr::TrainConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("crop = 100\nbogus = 1\n").find("run.cfg:2: unknown config key 'bogus'"), std::string::npos);
  EXPECT_NE(message("batch_size = -3").find("non-negative integer"), std::string::npos);
  EXPECT_NE(message("lr = fast").find("expected a number"), std::string::npos);
  EXPECT_NE(message("lr = 0").find("lr must be positive"), std::string::npos);
  EXPECT_NE(message("preset = huge").find("huge"), std::string::npos);
  EXPECT_NE(message("lambda_phase = -1").find(">= 0"), std::string::npos);
  EXPECT_NE(message("just words").find("expected key = value"), std::string::npos);
  EXPECT_THROW(tr::TrainConfig::load("/nonexistent/run.cfg"), tr::TrainConfigError);
}

TEST(Dataset, LoadsSortedAndRejectsBadFiles) {
  auto d = fresh_dir("dataset");
  EXPECT_THROW(tr::load_dataset(d.string()), tr::DatasetError);
  io::write_wav((d / "b.wav").string(), voiced(800, 100));
  io::write_wav((d / "a.wav").string(), voiced(400, 100));
  std::ofstream(d / "notes.txt") << "ignored";
  auto data = tr::load_dataset(d.string());
  ASSERT_EQ(data.size(), 2u);
  EXPECT_EQ(data[0].id, "a");
  EXPECT_EQ(data[1].samples.size(), 800u);

  io::write_wav((d / "c.wav").string(), voiced(400, 100), 44100);
  try {
    tr::load_dataset(d.string());
    FAIL() << "expected DatasetError";
  } catch (const tr::DatasetError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("c.wav"), std::string::npos) << m;
    EXPECT_NE(m.find("44100"), std::string::npos) << m;
  }
  EXPECT_THROW(tr::load_dataset((d / "missing").string()), tr::DatasetError);
}

TEST(Dataset, SampleBatchShapePaddingDeterminism) {
  std::vector<tr::Utterance> data{{"long", voiced(20000, 120)}};
  std::mt19937_64 rng(3);
  auto b = tr::sample_batch(data, 16, 8000, rng);
  EXPECT_EQ(b.shape, (std::vector<std::size_t>{16, 8000}));

  std::vector<tr::Utterance> shorty{{"s", std::vector<float>(4000, 0.5f)}};
  auto p = tr::sample_batch(shorty, 1, 8000, rng);
  for (std::size_t i = 0; i < 8000; ++i) ASSERT_EQ(p[i], i < 4000 ? 0.5f : 0.0f) << i;

  std::mt19937_64 r1(9), r2(9);
  for (int k = 0; k < 3; ++k) EXPECT_EQ(tr::sample_batch(data, 4, 1000, r1).data, tr::sample_batch(data, 4, 1000, r2).data);
  EXPECT_THROW(tr::sample_batch({}, 1, 10, rng), tr::DatasetError);
}

TEST(Trainer, IdenticalRunsIdenticalReports) {
  auto c = small_config(fresh_dir("det"));
  std::vector<tr::Utterance> data{{"a", voiced(3000, 110)}, {"b", voiced(2500, 170, 1)}};
  tr::Trainer<float> a(c, data), b(c, data);
  for (int i = 0; i < 2; ++i) EXPECT_EQ(without_time(a.step().to_json().dump()), without_time(b.step().to_json().dump()));
}

TEST(Trainer, DiscriminatorsIsolatedFromGeneratorUpdate) {
  auto c = small_config(fresh_dir("iso"));
  tr::Trainer<float> t(c, {{"a", voiced(3000, 110)}});
  auto& disc = t.discriminators();
  nm::Tensor<float> batch({1, 1600});
  auto x = voiced(1600, 140);
  std::copy(x.begin(), x.end(), batch.data.begin());
  bivocoder::losses::MelSetup<float> mel(t.model().stft());
  disc.set_trainable(false);
  auto g = tr::generator_objective(t.model(), &disc, batch, mel, c.weights);
  for (auto& p : t.model().parameters()) p.zero_grad();
  for (auto& p : disc.parameters()) p.zero_grad();
  nm::backward(g.total);
  disc.set_trainable(true);
  double d_grad = 0, g_grad = 0;
  for (auto& p : disc.parameters())
    for (float v : p.grad()) d_grad += std::abs(v);
  for (auto& p : t.model().parameters())
    for (float v : p.grad()) g_grad += std::abs(v);
  EXPECT_EQ(d_grad, 0.0);
  EXPECT_GT(g_grad, 0.0);
}

TEST(Trainer, FrozenDiscriminatorsNeverMove) {
  auto c = small_config(fresh_dir("frozen"));
  c.freeze_discriminators = true;
  tr::Trainer<float> t(c, {{"a", voiced(3000, 110)}});
  std::vector<std::vector<float>> before;
  for (auto& p : t.discriminators().parameters()) before.push_back(p.value().data);
  auto r = t.step();
  EXPECT_EQ(r.d_loss, 0.0);
  EXPECT_GT(r.g.adversarial + r.g.feature_matching, 0.0);
  auto after = t.discriminators().parameters();
  for (std::size_t i = 0; i < after.size(); ++i) ASSERT_EQ(after[i].value().data, before[i]);
}

TEST(Trainer, LearningRateDecaysPerEpoch) {
  auto c = small_config(fresh_dir("lr"));
  c.lr_decay = 0.5;
  tr::Trainer<float> t(c, {{"a", voiced(2000, 110)}, {"b", voiced(2000, 120)}, {"c", voiced(2000, 130)}});
  // Three utterances at batch 2: two steps per epoch.
  EXPECT_DOUBLE_EQ(t.step().lr, 2e-4);
  EXPECT_DOUBLE_EQ(t.step().lr, 2e-4);
  auto r = t.step();
  EXPECT_EQ(r.epoch, 1u);
  EXPECT_DOUBLE_EQ(r.lr, 1e-4);
}

TEST(Trainer, NonFiniteStepRolledBack) {
  auto c = small_config(fresh_dir("nan"));
  auto x = voiced(2000, 110);
  x[700] = std::numeric_limits<float>::quiet_NaN();
  tr::Trainer<float> t(c, {{"bad", x}});
  std::vector<std::vector<float>> before;
  for (auto& p : t.model().parameters()) before.push_back(p.value().data);
  EXPECT_THROW(t.step(), tr::StepAborted);
  EXPECT_EQ(t.step_count(), 0u);
  auto after = t.model().parameters();
  for (std::size_t i = 0; i < after.size(); ++i) ASSERT_EQ(after[i].value().data, before[i]);
}

TEST(Trainer, RejectsCropShorterThanDiscriminators) {
  auto c = small_config(fresh_dir("crop"));
  c.crop = 400;
  EXPECT_THROW(tr::Trainer<float>(c, {{"a", voiced(2000, 110)}}), tr::TrainConfigError);
  c.weights.adversarial = c.weights.feature_matching = 0;
  EXPECT_NO_THROW(tr::Trainer<float>(c, {{"a", voiced(2000, 110)}}));
}

TEST(Train, ZeroStepsWritesInitialCheckpointOnly) {
  auto root = fresh_dir("zero");
  io::write_wav((root / "a.wav").string(), voiced(3000, 110));
  auto c = small_config(root / "out");
  c.data_dir = root.string();
  c.max_steps = 0;
  const auto path = tr::train<float>(c);
  EXPECT_TRUE(fs::exists(path));
  EXPECT_TRUE(lines(c.log_path()).empty());
  auto ck = bivocoder::model::load_checkpoint_file(path);
  EXPECT_EQ(nlohmann::json::parse(ck.train_state).at("step"), 0);
}

TEST(Train, ResumeReproducesUninterruptedLog) {
  auto root = fresh_dir("resume");
  io::write_wav((root / "a.wav").string(), voiced(3000, 110));
  io::write_wav((root / "b.wav").string(), voiced(2600, 150, 2));
  auto full = small_config(root / "full");
  full.data_dir = root.string();
  tr::train<float>(full);

  auto part = small_config(root / "part");
  part.data_dir = root.string();
  part.max_steps = 2;
  tr::train<float>(part);
  fs::copy_file(part.checkpoint_path(), root / "step2.bvck");
  part.max_steps = 4;
  tr::train<float>(part, (root / "step2.bvck").string());

  const auto a = lines(full.log_path()), b = lines(part.log_path());
  ASSERT_EQ(a.size(), 4u);
  ASSERT_EQ(b.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(without_time(a[i]), without_time(b[i])) << "step " << i + 1;
  EXPECT_EQ(bivocoder::model::encode_checkpoint(bivocoder::model::load_checkpoint_file(full.checkpoint_path())),
            bivocoder::model::encode_checkpoint(bivocoder::model::load_checkpoint_file(part.checkpoint_path())));

  auto other = small_config(root / "other");
  other.data_dir = root.string();
  other.preset = "base";
  EXPECT_THROW(tr::train<float>(other, (root / "step2.bvck").string()), bivocoder::model::CheckpointError);
}

TEST(Train, ValidationRecordsLogged) {
  auto root = fresh_dir("val");
  for (int i = 0; i < 4; ++i) io::write_wav((root / ("u" + std::to_string(i) + ".wav")).string(), voiced(2400, 100 + 20 * i));
  auto c = small_config(root / "out");
  c.data_dir = root.string();
  c.max_steps = 2;
  c.validation_split = 0.25;
  c.validation_interval = 2;
  tr::train<float>(c);
  auto l = lines(c.log_path());
  ASSERT_EQ(l.size(), 3u);
  auto v = nlohmann::json::parse(l[2]);
  EXPECT_EQ(v.at("validation_step"), 2);
  EXPECT_EQ(v.at("utterances"), 1);
  EXPECT_TRUE(std::isfinite(v.at("snr").get<double>()));
}

TEST(Train, SmokeLossDecreasesWithFrozenDiscriminators) {
  auto c = small_config(fresh_dir("smoke"));
  c.crop = 3200;
  c.batch_size = 1;
  c.freeze_discriminators = true;
  c.weights.adversarial = c.weights.feature_matching = 0;
  tr::Trainer<float> t(c, {{"clip", voiced(3200, 130)}});
  const double initial = t.step().g.total;
  for (int i = 1; i < 200; ++i) t.step();
  EXPECT_LT(t.smoothed_loss(), initial);
}
