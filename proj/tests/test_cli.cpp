/* Copyright 2026 The LoZA Lab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "loza/cli/commands.hpp"
#include "loza/data/checkpoint.hpp"

namespace loza::cli {
namespace {

namespace fs = std::filesystem;

constexpr const char* kSmokeConfig = R"({
  "model": {"n_layers": 2, "d_model": 16, "n_heads": 2, "head_dim": 8, "ffn_dim": 24, "max_seq_len": 48},
  "pattern": {"sink_blocks": 1, "local_blocks": 1, "block_size": 8},
  "train": {"steps": 4, "batch_size": 2, "snapshot_step": 2, "seq_len": 48},
  "calibrate": {"steps": 2, "batch_size": 2, "sequences": 2},
  "pilot": {"seeds": [3], "n_short": 1, "n_long": 2, "n_loss": 1},
  "bench": {"context_lens": [1024, 4096], "decode_prompt": "key", "decode_steps": 8}
})";

struct CliRun {
  int code;
  std::string out, err;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("loza_cli_" + std::to_string(::getpid()) + "_" +
                                       ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir);
    std::ofstream(path("c.json")) << kSmokeConfig;
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string path(const std::string& name) const { return (dir / name).string(); }

  CliRun run(std::vector<std::string> args) {
    args.insert(args.begin(), "loza");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
  }

  static std::string slurp(const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
  }

  fs::path dir;
};

TEST_F(CliTest, UsageErrorsExitOne) {
  CliRun r = run({"eval", "--bogus"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(CliTest, BenchCostWritesCsvAndBalance) {
  const CliRun r = run({"bench-cost", "--config", path("c.json"), "--out", path("costs.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(path("costs.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "context_len,phase,mode_mix,attention_flops,kv_rows,ratio_vs_full");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 2 * 3);
  const auto balance = data::Json::parse(slurp(path("costs.csv.balance.json")));
  EXPECT_EQ(balance.at("layer_level").at("cv").get<double>(), 0.0);
  EXPECT_GT(balance.at("head_level_adversarial").at("max_over_mean").get<double>(), 1.5);
}

TEST_F(CliTest, SparsifyWithoutCalibrationNamesTheInput) {
  ASSERT_EQ(run({"train", "--config", path("c.json"), "--out", path("m.ckpt")}).code, 0);
  const CliRun r = run({"sparsify", "--config", path("c.json"), "--checkpoint", path("m.ckpt"), "--out", path("s.ckpt")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--calibration"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("calibrate"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(path("s.ckpt")));
}

TEST_F(CliTest, FullChain) {
  const std::string c = path("c.json");
  ASSERT_EQ(run({"train", "--config", c, "--seed", "4", "--out", path("m.ckpt")}).code, 0);
  ASSERT_TRUE(fs::exists(path("m.ckpt.w0")));
  ASSERT_EQ(run({"calibrate", "--config", c, "--seed", "4", "--checkpoint", path("m.ckpt"), "--out", path("cal.json")})
                .code,
            0);
  const auto cal = data::Json::parse(slurp(path("cal.json")));
  EXPECT_EQ(cal.at("alphas").size(), 2u);
  ASSERT_EQ(run({"sparsify", "--config", c, "--checkpoint", path("m.ckpt"), "--calibration", path("cal.json"), "--out",
                 path("s.ckpt")})
                .code,
            0);
  const model::Model s = data::load_checkpoint(path("s.ckpt"));
  EXPECT_EQ(model::is_sparse(s.mode(0)) + model::is_sparse(s.mode(1)), 1);
  ASSERT_EQ(run({"rewind-train", "--config", c, "--seed", "4", "--checkpoint", path("m.ckpt.w0"), "--calibration",
                 path("cal.json"), "--out", path("r.ckpt")})
                .code,
            0);
  ASSERT_EQ(run({"rewind-train", "--config", c, "--seed", "4", "--checkpoint", path("m.ckpt.w0"), "--interleaved",
                 "--out", path("i.ckpt")})
                .code,
            0);
  EXPECT_TRUE(model::is_sparse(data::load_checkpoint(path("i.ckpt")).mode(1)));
  const CliRun e = run({"eval", "--config", c, "--checkpoint", path("r.ckpt")});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto metrics = data::Json::parse(e.out);
  EXPECT_TRUE(metrics.contains("short_task_acc"));
  EXPECT_TRUE(metrics.contains("long_task_acc"));
}

TEST_F(CliTest, RunPilotIsByteIdentical) {
  const std::string c = path("c.json");
  ASSERT_EQ(run({"run-pilot", "--config", c, "--seed", "7", "--out", path("a.json")}).code, 0);
  ASSERT_EQ(run({"run-pilot", "--config", c, "--seed", "7", "--out", path("b.json")}).code, 0);
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
  EXPECT_EQ(data::Json::parse(slurp(path("a.json"))).at("seeds"), data::Json::array({7}));
}

TEST_F(CliTest, DecodeDemoStreamsTsv) {
  const CliRun r = run({"decode-demo", "--config", path("c.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "position\ttoken\trows_read_full\trows_read_sparse");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 3) << line;
  }
  EXPECT_EQ(rows, 8u);
}

TEST_F(CliTest, IoAndIntegrityErrorsExitTwo) {
  EXPECT_EQ(run({"eval", "--config", path("c.json"), "--checkpoint", path("missing.ckpt")}).code, 2);
  std::ofstream(path("junk.ckpt")) << "LOZAjunk";
  EXPECT_EQ(run({"eval", "--config", path("c.json"), "--checkpoint", path("junk.ckpt")}).code, 2);
  EXPECT_EQ(run({"eval", "--config", path("nope.json"), "--checkpoint", path("x")}).code, 2);
}

TEST_F(CliTest, ConfigAndContractErrorsExitOne) {
  std::ofstream(path("bad.json")) << R"({"train": {"stepz": 1}})";
  EXPECT_EQ(run({"train", "--config", path("bad.json"), "--out", path("m.ckpt")}).code, 1);
  EXPECT_EQ(run({"train", "--config", path("c.json")}).code, 1);  // no --out
  // A checkpoint whose config differs from the experiment config.
  ASSERT_EQ(run({"train", "--config", path("c.json"), "--out", path("m.ckpt")}).code, 0);
  std::ofstream(path("other.json")) << R"({"model": {"n_layers": 3, "d_model": 16, "n_heads": 2, "head_dim": 8,
      "ffn_dim": 24, "max_seq_len": 48}, "pattern": {"local_blocks": 1, "block_size": 8}, "train": {"seq_len": 48}})";
  EXPECT_EQ(run({"eval", "--config", path("other.json"), "--checkpoint", path("m.ckpt")}).code, 2);
}

}  // namespace
}  // namespace loza::cli
