#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lsd/commands.hpp"
#include "lsd/config.hpp"
#include "lsd/errors.hpp"

using namespace lsd;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Workdir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("lsd_cfg_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& text) {
    std::ofstream(dir_ / name) << text;
    return dir_ / name;
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  }

  json tiny(const std::string& out) const {
    return {{"task", {{"type", "countdown"}, {"seq_len", 3}, {"vocab", 3}}},
            {"diffusion", "absorbing"},
            {"method", "lsd+"},
            {"distill",
             {{"teacher_steps", 32}, {"student_steps", 4}, {"epochs", 2}, {"n_samples", 8}}},
            {"eval", {{"nfe", {2, 4}}, {"n_eval_samples", 50}, {"n_loss_samples", 4}}},
            {"output_dir", (dir_ / out).string()},
            {"seed", 11}};
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Workdir, ParsesAndFillsDefaults) {
  const auto cfg = RunConfig::load(write("c.json", tiny("o").dump(2)));
  EXPECT_EQ(cfg.problem.distribution.seq_len, 3);
  EXPECT_EQ(cfg.distill.kappa_epochs, 2);
  EXPECT_EQ(cfg.distill.eta, 1e-3);
  EXPECT_EQ(cfg.resolved_distill().zeta, 0);
  EXPECT_EQ(*cfg.seed, 11u);
  const auto round = RunConfig::from_json(cfg.to_json(), dir_);
  EXPECT_EQ(round.to_json(), cfg.to_json());
  EXPECT_EQ(round.hash(), cfg.hash());
}

TEST_F(Workdir, HashIgnoresEvalAndOutput) {
  auto a = tiny("o");
  auto b = a;
  b["eval"]["n_eval_samples"] = 999;
  b["output_dir"] = "elsewhere";
  EXPECT_EQ(RunConfig::from_json(a, dir_).hash(), RunConfig::from_json(b, dir_).hash());
  b["distill"]["eta"] = 0.01;
  EXPECT_NE(RunConfig::from_json(a, dir_).hash(), RunConfig::from_json(b, dir_).hash());
}

TEST_F(Workdir, ErrorsNameThePathAndLine) {
  auto doc = tiny("o");
  doc["distill"]["learning_rate"] = 0.1;
  try {
    RunConfig::load(write("c.json", doc.dump(2)));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("/distill/learning_rate"), std::string::npos) << what;
    EXPECT_NE(what.find("line"), std::string::npos) << what;
  }
  EXPECT_THROW(RunConfig::load(write("bad.json", "{\n \"seed\": 1,\n")), ConfigError);
  doc = tiny("o");
  doc["distill"]["student_steps"] = 5;
  EXPECT_THROW(RunConfig::from_json(doc, dir_), ConfigError);
  doc = tiny("o");
  doc["diffusion"] = "gaussian";
  EXPECT_THROW(RunConfig::from_json(doc, dir_), ConfigError);
  doc = tiny("o");
  doc["eval"]["nfe"] = json::array();
  EXPECT_THROW(RunConfig::from_json(doc, dir_), ConfigError);
  EXPECT_THROW(RunConfig::load(dir_ / "nope.json"), ConfigError);
}

TEST_F(Workdir, CustomDistributionFromFile) {
  write("d.json", R"({"vocab": 2, "seq_len": 2, "support": [[0, 1], [1, 0]], "probs": [0.5, 0.5]})");
  json doc = tiny("o");
  doc["task"] = {{"type", "custom-distribution"}, {"path", "d.json"}};
  const auto cfg = RunConfig::load(write("c.json", doc.dump()));
  EXPECT_EQ(cfg.problem.distribution.support.size(), 2u);
  EXPECT_FALSE(cfg.problem.rule().has_value());
  const auto p = Problem::from_json(cfg.problem.to_json());
  EXPECT_EQ(p.distribution.support, cfg.problem.distribution.support);
}

TEST_F(Workdir, TrainSampleVerifySweep) {
  const auto cfg = write("c.json", tiny("run").dump(2));
  std::ostringstream out, err;
  GlobalOptions opts;
  ASSERT_EQ(cmd_train(cfg, opts, out, err), kExitOk) << err.str();
  EXPECT_TRUE(fs::exists(dir_ / "run" / "learned.json"));
  EXPECT_TRUE(fs::exists(dir_ / "run" / "learned_lsd.json"));
  EXPECT_TRUE(fs::exists(dir_ / "run" / "loss_trace.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "run" / "resolved_config.json"));
  EXPECT_NE(out.str().find("final per-step losses"), std::string::npos);

  ASSERT_EQ(cmd_verify(dir_ / "run" / "learned.json", out, err), kExitOk) << err.str();
  ASSERT_EQ(cmd_sample(dir_ / "run" / "learned.json", 20, dir_ / "s.jsonl", opts, out, err), kExitOk)
      << err.str();
  std::ifstream in(dir_ / "s.jsonl");
  int lines = 0;
  for (std::string line; std::getline(in, line); ++lines) EXPECT_EQ(json::parse(line).size(), 3u);
  EXPECT_EQ(lines, 20);
  ASSERT_EQ(cmd_sample(dir_ / "run" / "learned.json", 0, dir_ / "empty.jsonl", opts, out, err),
            kExitOk);
  EXPECT_EQ(slurp(dir_ / "empty.jsonl"), "");

  // sweep against the artifact just trained (NFE 4 only)
  auto doc = tiny("sweep");
  doc["eval"]["nfe"] = {4};
  doc["eval"]["learned"] = {{"4", (dir_ / "run" / "learned.json").string()}};
  ASSERT_EQ(cmd_sweep(write("s.json", doc.dump()), opts, out, err), kExitOk) << err.str();
  const auto csv = slurp(dir_ / "sweep" / "sweep.csv");
  EXPECT_NE(csv.find("lsd+-euler,4,"), std::string::npos) << csv;
  EXPECT_EQ(err.str().find("warning"), std::string::npos);

  // a different seed changes the provenance hash
  std::ostringstream err2;
  GlobalOptions other;
  other.seed = 12;
  ASSERT_EQ(cmd_sweep(write("s.json", doc.dump()), other, out, err2), kExitOk);
  EXPECT_NE(err2.str().find("warning"), std::string::npos);

  doc["eval"]["nfe"] = {2, 4};
  EXPECT_EQ(cmd_sweep(write("s2.json", doc.dump()), opts, out, err), kExitConfig);
}

TEST_F(Workdir, SweepTrainsPerNfe) {
  auto doc = tiny("tr");
  doc["eval"]["learned"] = "train";
  std::ostringstream out, err;
  ASSERT_EQ(cmd_sweep(write("c.json", doc.dump()), {}, out, err), kExitOk) << err.str();
  EXPECT_TRUE(fs::exists(dir_ / "tr" / "nfe_2" / "learned.json"));
  const auto csv = slurp(dir_ / "tr" / "sweep.csv");
  EXPECT_NE(csv.find("lsd-euler,2,"), std::string::npos);
  EXPECT_NE(csv.find("lsd+-euler,4,"), std::string::npos);
}

TEST_F(Workdir, ExitCodes) {
  std::ostringstream out, err;
  auto doc = tiny("o");
  doc.erase("seed");
  EXPECT_EQ(cmd_train(write("noseed.json", doc.dump()), {}, out, err), kExitConfig);
  EXPECT_EQ(cmd_train(dir_ / "missing.json", {}, out, err), kExitConfig);
  doc = tiny("o");
  doc["distill"]["eta"] = 100.0;
  doc["distill"]["grad_clip"] = 0.0;
  doc["diffusion"] = "uniform";
  EXPECT_EQ(cmd_train(write("diverge.json", doc.dump()), {}, out, err), kExitRuntime);
  EXPECT_NE(err.str().find("diverged"), std::string::npos);
  write("junk.json", "{\"version\": 1}");
  EXPECT_EQ(cmd_verify(dir_ / "junk.json", out, err), kExitConfig);
  EXPECT_EQ(cmd_sample(dir_ / "junk.json", 5, dir_ / "x.jsonl", {}, out, err), kExitConfig);
}
