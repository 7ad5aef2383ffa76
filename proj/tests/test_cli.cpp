#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bthick/cli.hpp"

namespace bthick {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "bthick");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("bthick_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Small linear model trained on blobs; returns the checkpoint path.
  std::string train_blobs(const std::string& sub) {
    const auto r = run({"--preset", "blobs-linear", "--output-dir", path(sub), "train", "--epochs", "5"});
    EXPECT_EQ(r.code, 0) << r.err;
    return path(sub + "/model.bthk");
  }

  fs::path dir_;
};

TEST_F(CliTest, HelpExitsZero) {
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({"measure", "--help"}).code, 0);
}

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"train", "--no-such-flag"}).code, 1);
  EXPECT_EQ(run({"measure", "--data", "x.csv"}).code, 1);  // --model missing
  EXPECT_EQ(run({"--preset", "nope", "dataset"}).code, 1);
  EXPECT_EQ(run({"dataset", "--kind", "spiral"}).code, 1);
}

TEST_F(CliTest, MissingFilesExitTwo) {
  const auto r = run({"measure", "--model", path("missing.bthk"), "--data", path("missing.csv")});
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(r.out.empty());
}

TEST_F(CliTest, DatasetWritesCsvAndJson) {
  const auto r = run({"--seed", "3", "dataset", "--kind", "chessboard", "--grid", "3", "--points-per-square",
                      "5", "--pad-dim", "6", "--out", path("board.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["rows"], 45);
  EXPECT_EQ(j["dim"], 6);
  EXPECT_TRUE(fs::exists(path("board.csv")));
}

TEST_F(CliTest, PresetFillsUnsetValuesAndFlagsWin) {
  const auto r = run({"--preset", "blobs-linear", "--output-dir", path("o"), "train", "--epochs", "2", "--lr", "0.05"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto config = nlohmann::json::parse(r.out)["config"].get<std::string>();
  EXPECT_NE(config.find("train.lr=0.05"), std::string::npos);
  EXPECT_NE(config.find("train.depth=1"), std::string::npos);
  EXPECT_NE(config.find("train.epochs=2"), std::string::npos);
  EXPECT_EQ(config.find("measure."), std::string::npos);
}

TEST_F(CliTest, EffectiveConfigReplaysTheRun) {
  ASSERT_EQ(run({"--preset", "blobs-linear", "--seed", "4", "--output-dir", path("a"), "train", "--epochs", "4"}).code, 0);
  const auto replay = run({"--config", path("a/effective_config.ini"), "--output-dir", path("b"), "train",
                           "--model-out", path("b/model.bthk")});
  ASSERT_EQ(replay.code, 0) << replay.err;
  EXPECT_EQ(slurp(path("a/model.bthk")), slurp(path("b/model.bthk")));
  EXPECT_EQ(slurp(path("a/metrics.csv")), slurp(path("b/metrics.csv")));
}

TEST_F(CliTest, MeasureIsIndependentOfThreads) {
  const auto model = train_blobs("m");
  ASSERT_EQ(run({"--seed", "1", "dataset", "--kind", "blobs", "--centers", "-1,0;1,0", "--out", path("d.csv")}).code, 0);
  std::string first;
  for (const char* threads : {"1", "3"}) {
    const auto r = run({"--threads", threads, "measure", "--model", model, "--data", path("d.csv"), "--segments",
                        "30", "--epsilon", "3", "--csv-out", path("t.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["num_segments"], 30);
    const auto per_segment = j["per_segment"].dump();
    if (first.empty()) first = per_segment;
    EXPECT_EQ(per_segment, first);
  }
  EXPECT_EQ(slurp(path("t.csv")).rfind("mean_thickness,", 0), 0u);
}

TEST_F(CliTest, AttackWritesAdversarialCsv) {
  const auto model = train_blobs("m");
  ASSERT_EQ(run({"dataset", "--kind", "blobs", "--centers", "-1,0;1,0", "--n-per-class", "10", "--out", path("d.csv")}).code, 0);
  const auto r = run({"attack", "--model", model, "--data", path("d.csv"), "--epsilon", "3", "--out", path("adv.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["rows"], 20);
  EXPECT_LE(j["mean_l2_distance"].get<double>(), 3.0 + 1e-9);
  EXPECT_TRUE(fs::exists(path("adv.csv")));
}

TEST_F(CliTest, ContractViolationExitsOne) {
  const auto model = train_blobs("m");
  ASSERT_EQ(run({"dataset", "--kind", "blobs", "--centers", "-1,0;1,0", "--out", path("d.csv")}).code, 0);
  EXPECT_EQ(run({"measure", "--model", model, "--data", path("d.csv"), "--alpha", "0.9", "--beta", "0.5"}).code, 1);
}

}  // namespace
}  // namespace bthick
