// Copyright 2026 The Dermseg Authors. All Rights Reserved.
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

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dermseg/cli.hpp"
#include "dermseg/data_io.hpp"
#include "dermseg/params.hpp"

namespace dermseg {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out, err;
};

Outcome invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "dermseg_cli_test" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

/// Relative path -> file bytes for every regular file under `root`.
std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return files;
}

fs::path tiny_config(const fs::path& dir) {
  const fs::path p = dir / "tiny.cfg";
  std::ofstream(p) << "rates = 1,2\nimage_size = 16\nsynth_count = 6\n"
                      "max_iter = 2\nbatch_size = 2\nbase_lr = 0.01\n";
  return p;
}

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(invoke({}).code, kExitUsage);
  const Outcome unknown = invoke({"frobnicate"});
  EXPECT_EQ(unknown.code, kExitUsage);
  EXPECT_NE(unknown.err.find("gen-data"), std::string::npos);  // usage text lists commands
  EXPECT_EQ(invoke({"train"}).code, kExitUsage);                // --out missing
  EXPECT_EQ(invoke({"gen-data", "--out", "x", "--bogus"}).code, kExitUsage);
  EXPECT_EQ(invoke({"gen-data", "--config", "/nonexistent.cfg", "--out", "x"}).code,
            kExitUsage);  // existence is checked while parsing arguments
  EXPECT_EQ(invoke({"eval", "--out", "x", "--ablation", "everything"}).code, kExitUsage);
}

TEST(Cli, RuntimeErrorsExitTwo) {
  const fs::path d = fresh_dir("runtime");
  std::ofstream(d / "bad.cfg") << "no_such_key = 1\n";
  const Outcome bad = invoke({"gen-data", "--config", (d / "bad.cfg").string(), "--out",
                              (d / "data").string()});
  EXPECT_EQ(bad.code, kExitRuntime);
  EXPECT_NE(bad.err.find("no_such_key"), std::string::npos);
  std::ofstream(d / "junk.ckpt") << "not a checkpoint";
  EXPECT_EQ(invoke({"predict", "--checkpoint", (d / "junk.ckpt").string(), "--input",
                    d.string(), "--out", (d / "p").string()})
                .code,
            kExitRuntime);
}

TEST(Cli, GenDataIsDeterministic) {
  const fs::path d = fresh_dir("gen");
  const fs::path cfg = tiny_config(d);
  ASSERT_EQ(invoke({"gen-data", "--config", cfg.string(), "--out", (d / "a").string()}).code,
            kExitOk);
  ASSERT_EQ(invoke({"gen-data", "--config", cfg.string(), "--out", (d / "b").string()}).code,
            kExitOk);
  const auto a = tree(d / "a");
  EXPECT_EQ(a, tree(d / "b"));
  EXPECT_EQ(a.count("manifest.txt"), 1u);
  EXPECT_EQ(a.size(), 6u * 2 + 1);
  // Re-running into the same directory reproduces it.
  ASSERT_EQ(invoke({"gen-data", "--config", cfg.string(), "--out", (d / "a").string()}).code,
            kExitOk);
  EXPECT_EQ(tree(d / "a"), a);
}

TEST(Cli, TrainEvalPredictWorkflow) {
  const fs::path d = fresh_dir("workflow");
  const fs::path cfg = tiny_config(d);
  ASSERT_EQ(invoke({"gen-data", "--config", cfg.string(), "--out", (d / "data").string()}).code,
            kExitOk);
  const Outcome tr = invoke({"train", "--config", cfg.string(), "--data",
                             (d / "data").string(), "--out", (d / "run").string()});
  ASSERT_EQ(tr.code, kExitOk) << tr.err;
  const Checkpoint ckpt = read_checkpoint(d / "run" / "model.ckpt");
  EXPECT_NE(ckpt.config_text.find("max_iter = 2"), std::string::npos);
  EXPECT_EQ(slurp(d / "run" / "loss.csv").substr(0, 13), "iter,lr,loss\n");

  const Outcome ev = invoke({"eval", "--config", cfg.string(), "--data", (d / "data").string(),
                             "--checkpoint", (d / "run" / "model.ckpt").string(), "--out",
                             (d / "eval").string()});
  ASSERT_EQ(ev.code, kExitOk) << ev.err;
  for (const char* f : {"metrics.csv", "ja_histogram.csv", "summary.txt"}) {
    EXPECT_TRUE(fs::exists(d / "eval" / f)) << f;
  }
  EXPECT_NE(ev.out.find("JA"), std::string::npos);

  const Outcome mismatch = invoke({"eval", "--config", cfg.string(), "--data",
                                   (d / "data").string(), "--checkpoint",
                                   (d / "run" / "model.ckpt").string(), "--ablation",
                                   "baseline", "--out", (d / "eval2").string()});
  EXPECT_EQ(mismatch.code, kExitRuntime);

  const Outcome pr = invoke({"predict", "--checkpoint", (d / "run" / "model.ckpt").string(),
                             "--input", (d / "data").string(), "--out",
                             (d / "pred").string()});
  ASSERT_EQ(pr.code, kExitOk) << pr.err;
  std::size_t masks = 0;
  for (const auto& e : fs::directory_iterator(d / "pred")) {
    const Tensor m = read_mask(e.path());
    EXPECT_EQ(m.shape(), (Shape{1, 16, 16}));
    ++masks;
  }
  EXPECT_EQ(masks, 6u);
}

TEST(Cli, GradcheckPassesAndReportsEveryCase) {
  const Outcome g = invoke({"gradcheck"});
  EXPECT_EQ(g.code, kExitOk) << g.err;
  EXPECT_NE(g.out.find("conv2d"), std::string::npos);
  EXPECT_NE(g.out.find("fuse_scores"), std::string::npos);
  EXPECT_GT(std::count(g.out.begin(), g.out.end(), '\n'), 20);
}

}  // namespace
}  // namespace dermseg
