// Copyright 2026 The capsed Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Drives the capsed executable and checks exit codes and flag handling.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include "capsed/config.h"
#include "capsed/pipeline.h"
#include "capsed/synth.h"
#include "capsed/tensor_io.h"
#include "json.hpp"

namespace capsed {
namespace {

namespace fs = std::filesystem;

struct RunResult {
  int code = -1;
  std::string out;
};

RunResult RunCli(const std::string& args) {
  const std::string cmd = std::string(CAPSED_CLI_PATH) + " " + args + " 2>&1";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::path(::testing::TempDir()) /
           ("capsed_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string P(const std::string& name) const { return (dir_ / name).string(); }
  void WriteFile(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name) << text;
  }

  fs::path dir_;
};

TEST_F(CliTest, EverySubcommandDocumentsItsFlags) {
  for (const std::string sub :
       {"synth-data", "extract-features", "train", "predict", "evaluate", "show-config"}) {
    const RunResult r = RunCli(sub + " --help");
    EXPECT_EQ(r.code, 0) << sub;
    for (const std::string flag : {"--config", "--seed", "--out", "--preset"}) {
      EXPECT_NE(r.out.find(flag), std::string::npos) << sub << " " << flag;
    }
  }
  EXPECT_NE(RunCli("extract-features --help").out.find("--jobs"), std::string::npos);
  EXPECT_NE(RunCli("predict --help").out.find("--run"), std::string::npos);
  EXPECT_NE(RunCli("evaluate --help").out.find("--reference"), std::string::npos);
}

TEST_F(CliTest, UsageErrorsExitWithTwo) {
  EXPECT_EQ(RunCli("").code, 2);
  EXPECT_EQ(RunCli("train --no-such-flag").code, 2);
  EXPECT_EQ(RunCli("frobnicate").code, 2);
  EXPECT_EQ(RunCli("show-config --preset huge").code, 2);
}

TEST_F(CliTest, FlagsOverrideConfigFile) {
  WriteFile("c.json", R"({"train": {"seed": 5, "epochs": 3}})");
  const std::string out = P("shown.json");
  ASSERT_EQ(RunCli("show-config --preset desk --config " + P("c.json") + " --seed 9 --out " + out).code,
            0);
  std::ifstream in(out);
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["train"]["seed"], 9);
  EXPECT_EQ(j["train"]["epochs"], 3);
  EXPECT_EQ(j["model"]["input_frames"], RunConfig::Desk().model.input_frames);
}

TEST_F(CliTest, MissingFileExitsWithThree) {
  EXPECT_EQ(RunCli("show-config --config " + P("absent.json")).code, 3);
  WriteFile("ref.tsv", "a\t0.0\t1.0\ttone\n");
  EXPECT_EQ(RunCli("evaluate --predictions " + P("nowhere") + " --reference " + P("ref.tsv")).code,
            3);
  EXPECT_EQ(RunCli("train --preset desk --features " + P("nofeatures") + " --out " + P("run")).code,
            3);
}

TEST_F(CliTest, MalformedInputExitsWithFour) {
  fs::create_directories(dir_ / "pred");
  WriteFile("pred/tags.csv", "a,tone\n");
  WriteFile("pred/events.tsv", "a\t2.0\t1.0\ttone\n");
  WriteFile("ref.tsv", "a\t0.0\t1.0\ttone\n");
  EXPECT_EQ(RunCli("evaluate --predictions " + P("pred") + " --reference " + P("ref.tsv")).code, 4);
  WriteFile("pred/events.tsv", "a\t0.0\t1.0\ttone\n");
  WriteFile("bad_manifest.json", "{\"split\": 1}");
  EXPECT_EQ(RunCli("evaluate --predictions " + P("pred") + " --reference " + P("ref.tsv") +
                   " --manifest " + P("bad_manifest.json"))
                .code,
            4);
}

TEST_F(CliTest, ConfigViolationExitsWithFive) {
  WriteFile("unknown.json", R"({"train": {"epochz": 3}})");
  EXPECT_EQ(RunCli("show-config --config " + P("unknown.json")).code, 5);
  WriteFile("type.json", R"({"postprocess": {"dilation_size": "wide"}})");
  EXPECT_EQ(RunCli("show-config --config " + P("type.json")).code, 5);
  WriteFile("broken.json", "{");
  EXPECT_EQ(RunCli("show-config --config " + P("broken.json")).code, 5);
}

TEST_F(CliTest, NonFiniteFeaturesExitWithSix) {
  RunConfig c = RunConfig::Desk();
  c.synth.clips_per_split = {{"train", 3}, {"validation", 1}};
  WriteCorpus(c.synth, dir_ / "data");
  ExtractFeatureSplits(c, dir_ / "data", dir_ / "feat");
  const Manifest m = LoadManifest(ManifestPath(dir_ / "feat", "train"));
  const fs::path victim = dir_ / "feat" / m.clips[0].file;
  Tensor<float> t = LoadTensor(victim);
  t[0] = std::numeric_limits<float>::quiet_NaN();
  SaveTensor(victim, t);
  const RunResult r =
      RunCli("train --preset desk --epochs 1 --features " + P("feat") + " --out " + P("run"));
  EXPECT_EQ(r.code, 6) << r.out;
  EXPECT_NE(r.out.find("epoch 0 batch"), std::string::npos) << r.out;
}

TEST_F(CliTest, EvaluateWritesMetricsJson) {
  fs::create_directories(dir_ / "pred");
  WriteFile("pred/tags.csv", "a,tone\nb,\n");
  WriteFile("pred/events.tsv", "a\t1.000000\t3.000000\ttone\nb\n");
  WriteFile("ref.tsv", "a\t1.000000\t3.000000\ttone\nb\n");
  const std::string args = "evaluate --predictions " + P("pred") + " --reference " + P("ref.tsv");
  ASSERT_EQ(RunCli(args + " --out " + P("m1.json")).code, 0);
  ASSERT_EQ(RunCli(args + " --out " + P("m2.json")).code, 0);
  std::ifstream a(P("m1.json")), b(P("m2.json"));
  const auto ja = nlohmann::json::parse(a);
  EXPECT_EQ(ja["tagging"]["f1"], 1.0);
  EXPECT_EQ(ja["sed"]["error_rate"], 0.0);
  std::ifstream a2(P("m1.json"));
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(a2), {}),
            std::string(std::istreambuf_iterator<char>(b), {}));
}

}  // namespace
}  // namespace capsed
