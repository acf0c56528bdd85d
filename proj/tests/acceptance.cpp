// Copyright (C) 2026 The LISA Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails. Paths of the CLI and unit-test binaries come from CMake.

#include <sys/wait.h>
#include <zlib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "lisa/engine.hpp"
#include "lisa/harness/experiment.hpp"

namespace fs = std::filesystem;
using namespace lisa;
using namespace lisa::harness;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
  std::vector<std::string> notes;  // printed above the verdict line
};

struct Command {
  int code = -1;
  std::string out;
};

Command shell(const std::string& cmd) {
  Command c;
  FILE* pipe = ::popen((cmd + " 2>&1").c_str(), "r");
  if (!pipe) return c;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) c.out.append(buf, n);
  const int status = ::pclose(pipe);
  c.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return c;
}

std::string quote(const std::string& s) { return "'" + s + "'"; }

std::string fixed(double v, int digits = 3) { return fmt(v, digits); }

// Runs gtest binaries (with optional filters) and checks they pass within `budget` seconds.
Outcome run_suites(const std::vector<std::pair<std::string, std::string>>& suites, double budget) {
  Outcome o;
  const auto t0 = Clock::now();
  std::size_t tests = 0;
  for (const auto& [bin, filter] : suites) {
    const auto c = shell(quote(bin) + (filter.empty() ? "" : " --gtest_filter=" + quote(filter)));
    const auto pos = c.out.rfind("[  PASSED  ] ");
    if (pos != std::string::npos) tests += std::stoul(c.out.substr(pos + 13));
    if (c.code != 0) {
      o.notes.push_back(c.out);
      o.detail = fs::path(bin).filename().string() + " failed";
      return o;
    }
  }
  const double t = seconds_since(t0);
  o.pass = t < budget && tests > 0;
  o.detail = std::to_string(tests) + " tests, " + fixed(t, 2) + "s (limit " + fixed(budget, 0) + "s)";
  return o;
}

// --- shared experiment data ----------------------------------------------------

std::map<std::uint64_t, ExperimentData>& data_cache() {
  static std::map<std::uint64_t, ExperimentData> cache;
  return cache;
}

const ExperimentData& data_for(std::uint64_t seed) {
  auto& cache = data_cache();
  auto it = cache.find(seed);
  if (it == cache.end()) it = cache.emplace(seed, generate_data(CorpusParams{}, seed)).first;
  return it->second;
}

ExperimentResult run_grid(const ExperimentData& d, std::vector<decode::Mode> modes,
                          std::vector<decode::Strategy> strategies, std::size_t max_scenes = 0,
                          const decode::DecodeConfig& cfg = {}) {
  ExperimentSpec spec;
  spec.decode = cfg;
  spec.modes = std::move(modes);
  spec.strategies = std::move(strategies);
  spec.max_scenes = max_scenes;
  spec.seed = d.master_seed;
  spec.write_traces = false;
  return run_experiment(d, spec);
}

const CellResult& cell(const ExperimentResult& r, const std::string& key) {
  const auto& c = r.cell(key);
  if (!c.ok) throw std::runtime_error("cell " + key + " failed: " + c.error);
  return c;
}

// --- criteria ------------------------------------------------------------------

Outcome identity_regression() {
  const auto t0 = Clock::now();
  const auto& d = data_for(1);
  decode::DecodeConfig cfg;
  cfg.beta = 0.0;
  cfg.gamma = {0.0, 0.0, 0.0};
  const auto r = run_grid(d, {decode::Mode::vanilla, decode::Mode::lisa}, {decode::Strategy::greedy}, 100, cfg);
  const auto& van = cell(r, "vanilla_greedy");
  const auto& lisa = cell(r, "lisa_greedy");
  std::size_t same = 0;
  for (std::size_t i = 0; i < van.captions.size() && i < lisa.captions.size(); ++i)
    same += van.captions[i].tokens == lisa.captions[i].tokens;
  const double t = seconds_since(t0);
  Outcome o;
  o.pass = van.num_scenes == 100 && lisa.num_scenes == 100 && same == 100 && lisa.stats.calls > 0 && t < 60;
  o.detail = std::to_string(same) + "/100 scenes identical, " + std::to_string(lisa.stats.calls) +
             " modulated score calls, " + fixed(t, 2) + "s (limit 60s)";
  return o;
}

Outcome incremental_vs_batch() {
  const auto t0 = Clock::now();
  SplitMix64 rng(20260415);
  double worst_logit = 0.0, worst_acc = 0.0;
  for (int seq = 0; seq < 50; ++seq) {
    ModelConfig c;
    c.num_layers = 3 + rng.below(6);
    c.num_heads = 1 + rng.below(4);
    c.hidden_dim = c.num_heads * (2 + rng.below(8));
    c.vocab_size = 16 + rng.below(80);
    c.ffn_dim = 8 + rng.below(40);
    c.max_seq_len = 64;
    const Model m = make_random_model(c, rng.next());
    spectral::SpectralModulator mod;
    mod.gamma = {rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(0, 2)};
    mod.zones = spectral::partition_zones(nullptr, c.num_layers, spectral::ZonePolicy::thirds);
    mod.per_head = rng.below(2) == 1;
    const spectral::SpectralModulator* mp = rng.below(4) == 0 ? nullptr : &mod;

    std::vector<TokenId> tokens(2 + rng.below(40));
    for (auto& t : tokens) t = static_cast<TokenId>(rng.below(c.vocab_size));

    const auto ref = forward_sequence(m, tokens, mp);
    KVCache cache(c);
    for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
      const auto acts = forward_step(m, cache, tokens[pos], mp);
      const auto z = acts.final_logits();
      double diff = 0.0, scale = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) {
        diff = std::max(diff, std::abs(double(z[i]) - ref.logits(pos, i)));
        scale = std::max(scale, std::abs(double(ref.logits(pos, i))));
      }
      worst_logit = std::max(worst_logit, diff / std::max(scale, 1e-30));
    }
    for (std::size_t l = 0; l < c.num_layers; ++l) {
      for (auto [acc, mat] : {std::pair{cache.layers[l].acc_q, &ref.queries[l]}, {cache.layers[l].acc_k, &ref.keys[l]}}) {
        const double want = spectral::spectral_energy(*mat);
        worst_acc = std::max(worst_acc, std::abs(acc - want) / std::max(std::abs(want), 1e-30));
      }
    }
  }
  const double t = seconds_since(t0);
  Outcome o;
  o.pass = worst_logit <= 1e-5 && worst_acc <= 1e-6 && t < 60;
  char buf[160];
  std::snprintf(buf, sizeof buf, "50 sequences, max rel logit err %.2e, max rel accumulator err %.2e, %.2fs (limit 60s)",
                worst_logit, worst_acc, t);
  o.detail = buf;
  return o;
}

struct SeedRow {
  std::uint64_t seed;
  double chair_s_vanilla, chair_i_vanilla, chair_i_lisa, f1_vanilla, f1_lisa;
};

Outcome directional_check() {
  data_cache().clear();  // time the data builds too
  const auto t0 = Clock::now();
  Outcome o;
  std::size_t lower = 0;
  bool precondition = true;
  double f1_van = 0.0, f1_lisa = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto& d = data_for(seed);
    const auto r = run_grid(d, {decode::Mode::vanilla, decode::Mode::lisa}, {decode::Strategy::greedy});
    const auto& van = cell(r, "vanilla_greedy");
    const auto& lisa = cell(r, "lisa_greedy");
    SeedRow row{seed,
                van.amber.chair.chair_s.value,
                van.amber.chair.chair_i.value,
                lisa.amber.chair.chair_i.value,
                van.pope.overall.f1,
                lisa.pope.overall.f1};
    precondition = precondition && row.chair_s_vanilla >= 0.10;
    lower += row.chair_i_lisa < row.chair_i_vanilla;
    f1_van += row.f1_vanilla / 5;
    f1_lisa += row.f1_lisa / 5;
    o.notes.push_back("seed=" + std::to_string(seed) + " vanilla_chair_s=" + fixed(row.chair_s_vanilla) +
                      " chair_i vanilla=" + fixed(row.chair_i_vanilla) + " lisa=" + fixed(row.chair_i_lisa) +
                      " pope_f1 vanilla=" + fixed(row.f1_vanilla) + " lisa=" + fixed(row.f1_lisa));
  }
  const double t = seconds_since(t0);
  o.pass = precondition && lower >= 4 && f1_lisa >= f1_van && t < 600;
  o.detail = std::string(precondition ? "" : "vanilla CHAIR_S below 0.10 on some seed, ") + "CHAIR_I lower in " +
             std::to_string(lower) + "/5 seeds, mean POPE F1 lisa=" + fixed(f1_lisa) + " vanilla=" + fixed(f1_van) +
             ", " + fixed(t, 1) + "s (limit 600s)";
  return o;
}

Outcome ablation_ordering() {
  const auto t0 = Clock::now();
  Outcome o;
  double mean_van = 0.0, mean_flat = 0.0, mean_lisa = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto& d = data_for(seed);
    const auto r = run_grid(d, {decode::Mode::vanilla, decode::Mode::lisa_flat, decode::Mode::lisa},
                            {decode::Strategy::beam});
    const double van = cell(r, "vanilla_beam").pope.overall.f1;
    const double flat = cell(r, "lisa-flat_beam").pope.overall.f1;
    const double lisa = cell(r, "lisa_beam").pope.overall.f1;
    mean_van += van / 5;
    mean_flat += flat / 5;
    mean_lisa += lisa / 5;
    o.notes.push_back("seed=" + std::to_string(seed) + " beam pope_f1 vanilla=" + fixed(van, 4) +
                      " lisa-flat=" + fixed(flat, 4) + " lisa=" + fixed(lisa, 4));
  }
  o.pass = mean_lisa >= mean_flat && mean_flat >= mean_van;
  o.detail = "mean beam POPE F1 lisa=" + fixed(mean_lisa, 4) + " lisa-flat=" + fixed(mean_flat, 4) +
             " vanilla=" + fixed(mean_van, 4) + ", " + fixed(seconds_since(t0), 1) + "s";
  return o;
}

// crc32 and size of every file under `dir`, keyed by relative path.
std::map<std::string, std::string> tree_hashes(const fs::path& dir) {
  std::map<std::string, std::string> h;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto bytes = read_text(e.path().string());
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
    char buf[48];
    std::snprintf(buf, sizeof buf, "%08lx/%zu", static_cast<unsigned long>(crc), bytes.size());
    h[fs::relative(e.path(), dir).string()] = buf;
  }
  return h;
}

Outcome determinism() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / ("lisa_acceptance_" + std::to_string(::getpid()));
  const fs::path data = root / "data", out = root / "out", figs = root / "figs";
  const std::string cli = quote(LISA_CLI_PATH);
  struct Step {
    std::string name;
    std::string cmd;
    fs::path dir;
  };
  const std::vector<Step> steps{
      {"gen", cli + " gen --seed 1 --data " + quote(data.string()), data},
      {"run", cli + " run --data " + quote(data.string()) + " --out " + quote(out.string()) +
                  " --mode vanilla,lisa,lisa-flat --strategy greedy,beam,nucleus",
       out},
      {"eval", cli + " eval --corpus " + quote((data / "corpus.jsonl").string()) + " --captions " +
                   quote((out / "lisa_nucleus" / "captions.jsonl").string()) + " --pope " +
                   quote((out / "lisa_nucleus" / "pope_answers.jsonl").string()) + " --csv " +
                   quote((root / "eval" / "report.csv").string()),
       root / "eval"},
      {"trace", cli + " trace --input " + quote((out / "lisa_nucleus" / "trace.jsonl").string()) +
                    " --kind token-prob --kind spectral --kind heatmap --out " + quote(figs.string()),
       figs},
  };
  fs::remove_all(root);
  double grid_time = 0.0;
  std::size_t files = 0;
  bool ok = true;
  for (const auto& s : steps) {
    std::vector<std::map<std::string, std::string>> hashes;
    std::vector<std::string> stdout_text;
    for (int rep = 0; rep < 2; ++rep) {
      fs::remove_all(s.dir);
      if (s.name == "eval") fs::create_directories(s.dir);
      const auto t0 = Clock::now();
      const auto c = shell(s.cmd);
      if (s.name == "run") grid_time = std::max(grid_time, seconds_since(t0));
      if (c.code != 0) {
        o.notes.push_back(s.name + " exited " + std::to_string(c.code) + ": " + c.out);
        ok = false;
        break;
      }
      hashes.push_back(tree_hashes(s.dir));
      stdout_text.push_back(c.out);
    }
    if (hashes.size() != 2) break;
    const bool same = hashes[0] == hashes[1] && stdout_text[0] == stdout_text[1] && !hashes[0].empty();
    ok = ok && same;
    files += hashes[0].size();
    o.notes.push_back(s.name + ": " + std::to_string(hashes[0].size()) + " files, " +
                      (same ? "identical hashes" : "hashes differ"));
  }
  fs::remove_all(root);
  o.pass = ok && grid_time < 300;
  o.detail = std::to_string(files) + " output files identical across reruns, full grid " + fixed(grid_time, 1) +
             "s (limit 300s)";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"identity regression", identity_regression},
      {"equation unit suite",
       [] { return run_suites({{TEST_SPECTRAL_PATH, ""}, {TEST_DECODE_PATH, ""}}, 10); }},
      {"property suite",
       [] {
         return run_suites({{TEST_SPECTRAL_PATH,
                             "FusionWeights.NormalizedAndScaleInvariant:SuppressionFactor.MonotoneNonIncreasingAboveOne:"
                             "Stability.ReciprocalIdentityAndMonotonicity"},
                            {TEST_DECODE_PATH, "FuseLogitsProperty.*:SelectAnchorProperty.*"}},
                           30);
       }},
      {"oracle equivalence",
       [] {
         return run_suites({{TEST_METRICS_PATH, "ChairProperty.MatchesBruteForceOracle:PopeProperty.MatchesBruteForceOracle"}},
                           30);
       }},
      {"incremental vs batch", incremental_vs_batch},
      {"directional hallucination check", directional_check},
      {"ablation ordering", ablation_ordering},
      {"determinism", determinism},
  };
  std::size_t passed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.detail = std::string("error: ") + e.what();
    }
    for (const auto& n : o.notes) std::cout << "  " << n << (n.empty() || n.back() != '\n' ? "\n" : "");
    std::cout << "criterion " << i + 1 << ": " << (o.pass ? "PASS" : "FAIL") << " " << criteria[i].first << " ("
              << o.detail << ")" << std::endl;
    passed += o.pass;
  }
  std::cout << "acceptance: " << passed << "/" << criteria.size() << " criteria passed" << std::endl;
  return passed == criteria.size() ? 0 : 1;
}
