// Copyright (C) 2026 The LISA Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end checks of the `lisa` binary. LISA_CLI_PATH is set by CMake.

#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_root() { return fs::temp_directory_path() / ("lisa_cli_test_" + std::to_string(::getpid())); }

class RemoveScratch : public ::testing::Environment {
 public:
  void TearDown() override { fs::remove_all(scratch_root()); }
};
[[maybe_unused]] auto* const kRemoveScratch = ::testing::AddGlobalTestEnvironment(new RemoveScratch);

fs::path scratch(const std::string& name) {
  const auto dir = scratch_root() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Result lisa(const std::string& args, const std::string& env = "") {
  const auto err_file = scratch("stderr") / "err.txt";
  const std::string cmd = env + (env.empty() ? "" : " ") + "'" LISA_CLI_PATH "' " + args + " 2>'" +
                          err_file.string() + "'";
  Result r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err_file);
  return r;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cols;
    std::string col;
    std::istringstream ls(line);
    while (std::getline(ls, col, ',')) cols.push_back(col);
    if (!line.empty() && line.back() == ',') cols.emplace_back();
    rows.push_back(cols);
  }
  return rows;
}

// Shared small data directory.
const fs::path& data_dir() {
  static const fs::path dir = [] {
    auto d = scratch("data");
    const auto r = lisa("gen --seed 3 --scenes 12 --data '" + d.string() + "'");
    EXPECT_EQ(r.code, 0) << r.err;
    return d;
  }();
  return dir;
}

std::string run_args(const std::string& out) {
  return "run --data '" + data_dir().string() + "' --out '" + out + "' --max-scenes 4 ";
}

// Metric columns of a summary row, without the identifying and bookkeeping ones.
std::vector<std::string> metric_columns(const std::vector<std::string>& header, const std::vector<std::string>& row) {
  std::vector<std::string> v;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto& h = header[i];
    if (h == "cell" || h == "mode" || h == "strategy" || h == "modulation_calls" || h == "clamp_hits") continue;
    v.push_back(row.at(i));
  }
  return v;
}

}  // namespace

TEST(CliGen, SameSeedGivesIdenticalFiles) {
  const auto a = scratch("gen_a"), b = scratch("gen_b");
  const auto ra = lisa("gen --seed 9 --scenes 10 --data '" + a.string() + "'");
  const auto rb = lisa("gen --seed 9 --scenes 10 --data '" + b.string() + "'");
  ASSERT_EQ(ra.code, 0) << ra.err;
  ASSERT_EQ(rb.code, 0) << rb.err;
  EXPECT_EQ(ra.out, rb.out);
  for (const char* f : {"corpus.jsonl", "pope.jsonl", "model.json", "model.lisa", "build.json"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
}

TEST(CliGen, InvalidParamsExitTwo) {
  const auto d = scratch("gen_bad");
  const auto r = lisa("gen --bias-strength 1.5 --data '" + d.string() + "'");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("code=2"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("kind=validation"), std::string::npos) << r.err;
}

TEST(CliGen, SeedFallsBackToEnvironment) {
  const auto d = scratch("gen_env");
  auto r = lisa("gen --scenes 6 --data '" + d.string() + "'", "LISA_SEED=5");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("seed=5 ", 0), 0u) << r.out;
  r = lisa("gen --seed 6 --scenes 6 --data '" + d.string() + "'", "LISA_SEED=5");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("seed=6 ", 0), 0u) << r.out;
  r = lisa("gen --scenes 6 --data '" + d.string() + "'", "LISA_SEED=abc");
  EXPECT_EQ(r.code, 2);
}

TEST(CliRun, EffectiveConfigEchoesDefaults) {
  const auto out = scratch("run_defaults");
  const auto r = lisa(run_args(out.string()) + "--no-traces");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto cfg = nlohmann::json::parse(slurp(out / "effective_config.json"));
  const auto& d = cfg.at("decode");
  EXPECT_DOUBLE_EQ(d.at("beta").get<double>(), 0.6);
  EXPECT_EQ(d.at("gamma").get<std::vector<double>>(), (std::vector<double>{0.0, 0.0, 1.0}));
  EXPECT_DOUBLE_EQ(d.at("epsilon").get<double>(), 1e-7);
  EXPECT_EQ(d.at("beam_size").get<int>(), 5);
  EXPECT_DOUBLE_EQ(d.at("temperature").get<double>(), 0.7);
  EXPECT_DOUBLE_EQ(d.at("top_p").get<double>(), 0.9);
  EXPECT_EQ(d.at("max_tokens").get<int>(), 512);
  EXPECT_EQ(cfg.at("seed").get<int>(), 3);  // data master seed
  EXPECT_EQ(cfg.at("grid").at("modes"), nlohmann::json::array({"lisa"}));
  EXPECT_TRUE(fs::exists(out / "summary.csv"));
  EXPECT_EQ(slurp(out / "summary.csv"), r.out);
}

TEST(CliRun, IdentitySettingsMatchVanilla) {
  const auto out = scratch("run_identity");
  const auto r = lisa(run_args(out.string()) + "--mode vanilla,lisa --beta 0 --gamma 0 --no-traces");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(metric_columns(rows[0], rows[1]), metric_columns(rows[0], rows[2]));
  EXPECT_EQ(slurp(out / "lisa_greedy" / "captions.jsonl"), slurp(out / "vanilla_greedy" / "captions.jsonl"));
}

TEST(CliRun, BeamWidthOneMatchesGreedy) {
  const auto out = scratch("run_beam1");
  const auto r = lisa(run_args(out.string()) + "--strategy greedy,beam --beam-size 1 --no-traces");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(metric_columns(rows[0], rows[1]), metric_columns(rows[0], rows[2]));
  EXPECT_EQ(slurp(out / "lisa_beam" / "captions.jsonl"), slurp(out / "lisa_greedy" / "captions.jsonl"));
}

TEST(CliRun, BadModeExitsTwo) {
  const auto out = scratch("run_bad");
  const auto r = lisa(run_args(out.string()) + "--mode sharp");
  EXPECT_EQ(r.code, 2) << r.err;
}

TEST(CliEval, CaptionFixture) {
  const auto d = scratch("eval");
  std::ofstream(d / "caps.jsonl")
      << "{\"image_id\":\"a\",\"ground_truth\":[0,1],\"bias_set\":[4],\"caption\":\"a dog catches a frisbee near a car\"}\n"
         "{\"image_id\":\"b\",\"ground_truth\":[\"cat\",\"couch\"],\"caption\":\"two cats on a sofa\"}\n";
  const auto r = lisa("eval --captions '" + (d / "caps.jsonl").string() + "' --csv '" + (d / "m.csv").string() + "'");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("num_captions").get<int>(), 2);
  EXPECT_DOUBLE_EQ(j.at("chair").at("chair_s").at("value").get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(j.at("chair").at("chair_i").at("value").get<double>(), 0.2);
  EXPECT_DOUBLE_EQ(j.at("chair").at("cog").at("value").get<double>(), 0.2);
  const auto csv = csv_rows(slurp(d / "m.csv"));
  ASSERT_GE(csv.size(), 3u);
  EXPECT_EQ(csv[0], (std::vector<std::string>{"metric", "value", "numerator", "denominator"}));
  EXPECT_EQ(csv[1][0], "chair_s");
  EXPECT_EQ(csv[1][1], "0.500000");
}

TEST(CliEval, PerfectPopeAnswers) {
  const auto d = scratch("eval_pope");
  std::ofstream(d / "p.jsonl")
      << "{\"image_id\":\"a\",\"object\":0,\"split\":\"random\",\"gold\":\"yes\",\"answer\":\"yes\"}\n"
         "{\"image_id\":\"a\",\"object\":\"car\",\"split\":\"popular\",\"gold\":\"no\",\"answer\":\"no\"}\n";
  const auto r = lisa("eval --pope '" + (d / "p.jsonl").string() + "'");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_DOUBLE_EQ(j.at("pope").at("overall").at("f1").get<double>(), 1.0);
}

TEST(CliEval, EmptyFileExitsTwo) {
  const auto d = scratch("eval_empty");
  std::ofstream(d / "caps.jsonl") << "";
  const auto r = lisa("eval --captions '" + (d / "caps.jsonl").string() + "'");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("empty corpus"), std::string::npos) << r.err;
  EXPECT_EQ(lisa("eval").code, 2);
  EXPECT_EQ(lisa("eval --captions '" + (d / "missing.jsonl").string() + "'").code, 2);
}

TEST(CliTrace, FigureShapes) {
  const auto out = scratch("run_trace");
  auto r = lisa(run_args(out.string()) + "--max-tokens 6");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto trace = (out / "lisa_greedy" / "trace.jsonl").string();
  const auto figs = scratch("figs");
  r = lisa("trace --input '" + trace + "' --kind spectral --kind heatmap --kind token-prob --out '" + figs.string() +
           "'");
  ASSERT_EQ(r.code, 0) << r.err;

  const auto model = nlohmann::json::parse(slurp(data_dir() / "model.json"));
  const std::size_t L = model.at("num_layers").get<std::size_t>();

  const auto spectral = csv_rows(slurp(figs / "spectral.csv"));
  ASSERT_EQ(spectral.size(), 1 + L + 3);
  EXPECT_EQ(spectral[0], (std::vector<std::string>{"row", "layer", "tr_q", "tr_k", "tr_total", "zone"}));
  EXPECT_EQ(spectral[L + 1][0], "boundary");
  EXPECT_EQ(spectral[L + 1][5], "preservation");

  const auto heat = csv_rows(slurp(figs / "heatmap.csv"));
  ASSERT_GE(heat.size(), 2u);
  for (const auto& row : heat) EXPECT_EQ(row.size(), L + 1);

  const auto prob = csv_rows(slurp(figs / "token-prob.csv"));
  EXPECT_EQ(prob.size() - 1, (heat.size() - 1) * L);

  r = lisa("trace --input '" + trace + "' --kind histogram");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("histogram"), std::string::npos) << r.err;
}
