#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "bivocoder/cli/commands.hpp"

namespace cli = bivocoder::cli;
namespace io = bivocoder::io;
namespace md = bivocoder::model;
namespace fs = std::filesystem;

namespace {

std::vector<float> voiced(std::size_t n, double f0 = 140) {
  std::vector<float> x(n);
  for (std::size_t i = 0; i < n; ++i)
    for (int h = 1; h <= 5; ++h)
      x[i] += static_cast<float>(0.2 / h * std::sin(2 * std::numbers::pi * f0 * h * static_cast<double>(i) / 16000));
  return x;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("bivocoder_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    md::BiVocoder<float> m(md::ModelConfig::tiny(), 5);
    md::Checkpoint ck{m.config()};
    md::append_params(ck, m.named_parameters());
    md::save_checkpoint_file(ck, path("m.bvck"));
    io::write_wav(path("in.wav"), voiced(8000));
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  int run(const std::function<int()>& body) {
    log_.str("");
    return cli::guarded(log_, body);
  }

  fs::path dir_;
  std::ostringstream log_, out_;
};

}  // namespace

TEST_F(Cli, ExtractThenSynth) {
  ASSERT_EQ(run([&] { return cli::cmd_extract({path("m.bvck"), path("in.wav"), path("f.bvf")}, log_); }), 0) << log_.str();
  auto f = io::read_features(path("f.bvf"));
  EXPECT_EQ(f.frames(), 26u);
  EXPECT_EQ(f.dim(), 32u);

  ASSERT_EQ(run([&] { return cli::cmd_synth({path("m.bvck"), path("f.bvf"), path("out.wav"), {}}, log_); }), 0);
  EXPECT_EQ(io::read_wav(path("out.wav")).size(), 8320u);
  ASSERT_EQ(run([&] { return cli::cmd_synth({path("m.bvck"), path("f.bvf"), path("out2.wav"), 8000}, log_); }), 0);
  EXPECT_EQ(io::read_wav(path("out2.wav")).size(), 8000u);

  // Re-extraction of the synthesized audio keeps the frame count.
  ASSERT_EQ(run([&] { return cli::cmd_extract({path("m.bvck"), path("out2.wav"), path("g.bvf")}, log_); }), 0);
  EXPECT_EQ(io::read_features(path("g.bvf")).frames(), 26u);
}

TEST_F(Cli, InputErrorsExitTwo) {
  io::write_wav(path("stereo.wav"), voiced(800));
  {
    // Patch the channel count of a valid file to 2.
    std::fstream f(path("stereo.wav"), std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(22);
    f.put(2);
  }
  EXPECT_EQ(run([&] { return cli::cmd_extract({path("m.bvck"), path("stereo.wav"), path("x.bvf")}, log_); }), 2);
  EXPECT_NE(log_.str().find("channels"), std::string::npos) << log_.str();

  io::write_wav(path("fast.wav"), voiced(800), 22050);
  EXPECT_EQ(run([&] { return cli::cmd_extract({path("m.bvck"), path("fast.wav"), path("x.bvf")}, log_); }), 2);
  EXPECT_NE(log_.str().find("22050"), std::string::npos);

  std::ofstream(path("bad.bvf"), std::ios::binary) << "XXXX0000000000000000";
  EXPECT_EQ(run([&] { return cli::cmd_synth({path("m.bvck"), path("bad.bvf"), path("y.wav"), {}}, log_); }), 2);

  md::FeatureSequence<float> wrong{bivocoder::numerics::Tensor<float>({4, 16})};
  io::write_features(path("wrong.bvf"), wrong);
  EXPECT_EQ(run([&] { return cli::cmd_synth({path("m.bvck"), path("wrong.bvf"), path("y.wav"), {}}, log_); }), 2);
  EXPECT_NE(log_.str().find("dimension 32"), std::string::npos) << log_.str();

  EXPECT_EQ(run([&] { return cli::cmd_extract({path("missing.bvck"), path("in.wav"), path("x.bvf")}, log_); }), 2);
}

TEST_F(Cli, CopySynthLengthDeterminismMetrics) {
  const cli::CopySynthArgs a{path("m.bvck"), path("in.wav"), path("c1.wav"), true};
  ASSERT_EQ(run([&] { return cli::cmd_copysynth(a, out_, log_); }), 0);
  auto b = a;
  b.out = path("c2.wav");
  b.ref_metrics = false;
  ASSERT_EQ(run([&] { return cli::cmd_copysynth(b, out_, log_); }), 0);
  const auto y1 = io::read_wav(path("c1.wav")), y2 = io::read_wav(path("c2.wav"));
  EXPECT_EQ(y1.size(), 8000u);
  EXPECT_EQ(y1, y2);
  EXPECT_NE(out_.str().find("in.wav snr_db="), std::string::npos) << out_.str();
}

TEST_F(Cli, EvalSelfAndMismatches) {
  fs::create_directories(dir_ / "ref");
  fs::create_directories(dir_ / "deg");
  io::write_wav(path("ref/a.wav"), voiced(4000, 120));
  io::write_wav(path("ref/b.wav"), voiced(4000, 200));
  ASSERT_EQ(run([&] { return cli::cmd_eval({path("ref"), path("ref"), path("self.json")}, log_); }), 0);
  std::ifstream f(path("self.json"));
  auto j = nlohmann::json::parse(f);
  ASSERT_EQ(j.at("pairs").size(), 2u);
  for (const auto& p : j.at("pairs")) {
    EXPECT_EQ(p.at("snr_db"), bivocoder::metrics::kSnrCap);
    EXPECT_EQ(p.at("mcd_db"), 0.0);
    EXPECT_EQ(p.at("las_rmse_db"), 0.0);
    EXPECT_EQ(p.at("vuv_error_percent"), 0.0);
  }
  EXPECT_EQ(j.at("summary").at("evaluated"), 2);

  io::write_wav(path("deg/a.wav"), voiced(3999, 120));
  io::write_wav(path("deg/b.wav"), voiced(4000, 205));
  io::write_wav(path("deg/extra.wav"), voiced(4000, 205));
  ASSERT_EQ(run([&] { return cli::cmd_eval({path("ref"), path("deg"), path("mix.json")}, log_); }), 0);
  std::ifstream g(path("mix.json"));
  auto k = nlohmann::json::parse(g);
  EXPECT_EQ(k.at("summary").at("evaluated"), 1);
  EXPECT_EQ(k.at("summary").at("skipped"), 2);
  EXPECT_TRUE(k.at("pairs").at(0).contains("error"));
  EXPECT_NE(log_.str().find("extra.wav"), std::string::npos);

  fs::remove(path("deg/b.wav"));
  EXPECT_EQ(run([&] { return cli::cmd_eval({path("ref"), path("deg"), path("none.json")}, log_); }), 2);
}

TEST_F(Cli, BenchOutputAndRepeats) {
  ASSERT_EQ(run([&] { return cli::cmd_bench({path("m.bvck"), 1.0, 3}, out_, log_); }), 0);
  const auto line = out_.str();
  double rtf = 0, speed = 0;
  ASSERT_EQ(std::sscanf(line.c_str(), "rtf=%lf speed=%lf", &rtf, &speed), 2) << line;
  EXPECT_NEAR(rtf * speed, 1.0, 1e-5);  // both printed with 6 significant digits
  EXPECT_NE(line.find("preset=tiny"), std::string::npos);
  EXPECT_NE(line.find("device="), std::string::npos);
  EXPECT_EQ(run([&] { return cli::cmd_bench({path("m.bvck"), 1.0, 1}, out_, log_); }), 2);
}

TEST_F(Cli, TrainErrorsAndSmallRun) {
  EXPECT_EQ(run([&] { return cli::cmd_train({path("nope.cfg"), ""}, log_); }), 2);
  EXPECT_NE(log_.str().find("nope.cfg"), std::string::npos);

  fs::create_directories(dir_ / "data");
  io::write_wav(path("data/u.wav"), voiced(4000));
  std::ofstream(path("run.cfg")) << "data_dir = " << path("data") << "\nout_dir = " << path("run")
                                 << "\ncrop = 1600\nbatch_size = 1\nmax_steps = 10\ncheckpoint_interval = 5\n";
  ASSERT_EQ(run([&] { return cli::cmd_train({path("run.cfg"), ""}, log_); }), 0) << log_.str();
  EXPECT_TRUE(fs::exists(path("run/model.bvck")));

  std::ofstream(path("base.cfg")) << "data_dir = " << path("data") << "\nout_dir = " << path("run2")
                                  << "\npreset = base\ncrop = 1600\nbatch_size = 1\nmax_steps = 1\n";
  EXPECT_EQ(run([&] { return cli::cmd_train({path("base.cfg"), path("run/model.bvck")}, log_); }), 2);
  EXPECT_NE(log_.str().find("config mismatch"), std::string::npos) << log_.str();

  std::ofstream(path("typo.cfg")) << "data_dir = " << path("data") << "\nbatchsize = 2\n";
  EXPECT_EQ(run([&] { return cli::cmd_train({path("typo.cfg"), ""}, log_); }), 2);
  EXPECT_NE(log_.str().find("batchsize"), std::string::npos);
}
