// Copyright (C) 2026 The LISA Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// Experiment data sets and the (mode x strategy) grid runner.
///
/// Seed streams, all derived from one master seed with sub_seed(master, k):
///   0 corpus, 1 biased-model build, 2 POPE suite, 3 nucleus sampling
///   (scene i samples with sub_seed(sub_seed(master, 3), i)).
///
/// Data directory: corpus.jsonl, pope.jsonl, model.json, model.lisa, build.json.
/// Output directory: effective_config.json, summary.csv and per cell
/// <cell>/captions.jsonl, <cell>/pope_answers.jsonl, <cell>/trace.jsonl,
/// <cell>/metrics.json.

#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "lisa/decode.hpp"
#include "lisa/harness/biased_model.hpp"
#include "lisa/harness/corpus.hpp"
#include "lisa/harness/io.hpp"
#include "lisa/harness/tasks.hpp"
#include "lisa/harness/trace.hpp"
#include "lisa/metrics.hpp"
#include "lisa/model_io.hpp"

namespace lisa::harness {

enum SeedStream : std::uint64_t { kCorpusStream = 0, kModelStream = 1, kPopeStream = 2, kNucleusStream = 3 };

struct ExperimentData {
  std::uint64_t master_seed = 0;
  Corpus corpus;
  Model model;
  Vocabulary vocab;
  metrics::PopeSuite pope;
  FitReport fit;
};

inline ExperimentData generate_data(const CorpusParams& params, std::uint64_t master_seed,
                                    const BiasedModelParams& model_params = {}) {
  ExperimentData d;
  d.master_seed = master_seed;
  d.corpus = generate_corpus(params, sub_seed(master_seed, kCorpusStream));
  auto built = build_biased_model(d.corpus, model_params, sub_seed(master_seed, kModelStream));
  d.model = std::move(built.model);
  d.vocab = std::move(built.vocab);
  d.fit = std::move(built.fit);
  const auto truths = d.corpus.truths();
  d.pope = metrics::build_pope_suite(truths, d.corpus.lexicon.size(), d.corpus.stats,
                                     sub_seed(master_seed, kPopeStream));
  return d;
}

inline Json fit_json(const FitReport& f) {
  Json trials_c = Json::array(), trials_p = Json::array();
  for (const auto& t : f.caption_trials) trials_c.push_back({t.gain, t.metric});
  for (const auto& t : f.pope_trials) trials_p.push_back({t.gain, t.metric});
  return Json{{"caption_gain", f.caption_gain},
              {"pope_gain", f.pope_gain},
              {"fit_chair_s", f.fit_chair_s},
              {"fit_false_yes", f.fit_false_yes},
              {"zone_energy", f.zone_energy},
              {"caption_trials", trials_c},
              {"pope_trials", trials_p}};
}

inline void save_data(const std::filesystem::path& dir, const ExperimentData& d) {
  std::filesystem::create_directories(dir);
  write_text((dir / "corpus.jsonl").string(), corpus_to_jsonl(d.corpus, d.master_seed, d.vocab));
  write_text((dir / "pope.jsonl").string(), pope_to_jsonl(d.pope.items, d.corpus.lexicon, false));
  save_model(d.model, dir / "model.json", dir / "model.lisa");
  Json build{{"master_seed", d.master_seed},
             {"seed_streams", {{"corpus", kCorpusStream}, {"model", kModelStream}, {"pope", kPopeStream},
                               {"nucleus", kNucleusStream}}},
             {"corpus", corpus_params_json(d.corpus.params)},
             {"num_scenes", d.corpus.scenes.size()},
             {"pope_items", d.pope.items.size()},
             {"pope_flagged", d.pope.flagged},
             {"fit", fit_json(d.fit)}};
  write_text((dir / "build.json").string(), build.dump(2) + "\n");
}

inline ExperimentData load_data(const std::filesystem::path& dir) {
  ExperimentData d;
  const auto corpus_path = (dir / "corpus.jsonl").string();
  auto loaded = corpus_from_jsonl(read_text(corpus_path), corpus_path);
  d.master_seed = loaded.master_seed;
  d.corpus = std::move(loaded.corpus);
  d.model = load_model(dir / "model.json", dir / "model.lisa");
  d.vocab = Vocabulary(d.corpus.lexicon, d.model.config.vocab_size);
  if (d.vocab.size() != d.model.config.vocab_size)
    throw ValidationError("model vocabulary size does not match the corpus lexicon");
  const auto pope_path = (dir / "pope.jsonl").string();
  d.pope.items = pope_from_jsonl(read_text(pope_path), pope_path, d.corpus.lexicon, false);
  return d;
}

// ---------------------------------------------------------------------------
// Spec
// ---------------------------------------------------------------------------

struct GridCell {
  decode::Mode mode = decode::Mode::lisa;
  decode::Strategy strategy = decode::Strategy::greedy;

  std::string key() const { return std::string(decode::to_string(mode)) + "_" + decode::to_string(strategy); }
};

struct ExperimentSpec {
  /// Mode and strategy are overridden per cell.
  decode::DecodeConfig decode;
  std::vector<decode::Mode> modes{decode::Mode::lisa};
  std::vector<decode::Strategy> strategies{decode::Strategy::greedy};
  /// 0 = every corpus scene.
  std::size_t max_scenes = 0;
  std::size_t jobs = 1;
  /// Master seed for the nucleus stream.
  std::uint64_t seed = 0;
  /// Scenes (from the first) whose trace steps carry full fused logits.
  std::size_t trace_logit_scenes = 1;
  bool write_traces = true;
  std::string output_dir;

  std::vector<GridCell> cells() const {
    std::map<std::string, GridCell> unique;
    for (auto m : modes)
      for (auto s : strategies) unique[GridCell{m, s}.key()] = GridCell{m, s};
    std::vector<GridCell> out;
    for (auto& [k, c] : unique) out.push_back(c);
    return out;
  }

  void validate() const {
    if (modes.empty() || strategies.empty()) throw ValidationError("experiment grid is empty");
    if (jobs == 0) throw ValidationError("jobs must be positive");
    decode.validate();
  }
};

inline Json decode_json(const decode::DecodeConfig& c) {
  return Json{{"beta", c.beta},
              {"gamma", c.gamma},
              {"epsilon", c.epsilon},
              {"beam_size", c.beam_size},
              {"temperature", c.temperature},
              {"top_p", c.top_p},
              {"max_tokens", c.max_tokens},
              {"lambda_min", c.clamp.min},
              {"lambda_max", c.clamp.max},
              {"zone_policy", spectral::to_string(c.zone_policy)},
              {"per_head", c.per_head},
              {"fusion_set", c.fusion_set == decode::FusionSet::interaction ? "interaction" : "zone_representatives"},
              {"top_k_prefilter", c.top_k_prefilter}};
}

/// Applies the keys present in `j` on top of `c`.
inline decode::DecodeConfig decode_from_json(const Json& j, decode::DecodeConfig c) {
  if (!j.is_object()) throw ValidationError("decode section must be a JSON object");
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      const Json& v = *it;
      if (k == "beta") c.beta = v.get<double>();
      else if (k == "gamma") {
        const auto g = v.is_array() ? v.get<std::vector<double>>() : std::vector<double>{v.get<double>()};
        if (g.size() == 1) c.gamma = {g[0], g[0], g[0]};
        else if (g.size() == 3) c.gamma = {g[0], g[1], g[2]};
        else throw ValidationError("gamma needs one or three values");
      } else if (k == "epsilon") c.epsilon = v.get<double>();
      else if (k == "beam_size") c.beam_size = v.get<std::size_t>();
      else if (k == "temperature") c.temperature = v.get<double>();
      else if (k == "top_p") c.top_p = v.get<double>();
      else if (k == "max_tokens") c.max_tokens = v.get<std::size_t>();
      else if (k == "lambda_min") c.clamp.min = v.get<double>();
      else if (k == "lambda_max") c.clamp.max = v.get<double>();
      else if (k == "zone_policy") c.zone_policy = spectral::parse_zone_policy(v.get<std::string>());
      else if (k == "per_head") c.per_head = v.get<bool>();
      else if (k == "fusion_set") {
        const auto s = v.get<std::string>();
        if (s == "interaction") c.fusion_set = decode::FusionSet::interaction;
        else if (s == "zone_representatives") c.fusion_set = decode::FusionSet::zone_representatives;
        else throw ValidationError("unknown fusion_set '" + s + "'");
      } else if (k == "top_k_prefilter") c.top_k_prefilter = v.get<std::size_t>();
      else throw ValidationError("unknown decode key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("decode section: ") + e.what());
  }
  return c;
}

inline Json spec_json(const ExperimentSpec& s) {
  Json modes = Json::array(), strategies = Json::array();
  for (auto m : s.modes) modes.push_back(decode::to_string(m));
  for (auto st : s.strategies) strategies.push_back(decode::to_string(st));
  return Json{{"seed", s.seed},
              {"decode", decode_json(s.decode)},
              {"grid", {{"modes", modes}, {"strategies", strategies}}},
              {"max_scenes", s.max_scenes},
              {"jobs", s.jobs},
              {"trace_logit_scenes", s.trace_logit_scenes},
              {"write_traces", s.write_traces}};
}

// ---------------------------------------------------------------------------
// Cells
// ---------------------------------------------------------------------------

struct CellResult {
  GridCell cell;
  bool ok = false;
  std::string error;
  std::size_t num_scenes = 0;
  std::vector<CaptionRecord> captions;
  std::vector<metrics::PopeItem> answers;
  metrics::AmberScores amber;
  metrics::PopeReport pope;
  ModulationStats stats;
  std::string trace;  // JSON lines
};

namespace detail {

inline std::size_t scene_count(const ExperimentData& d, const ExperimentSpec& s) {
  const std::size_t n = d.corpus.scenes.size();
  return s.max_scenes == 0 ? n : std::min(n, s.max_scenes);
}

inline void add_stats(ModulationStats& a, const ModulationStats& b) {
  a.calls += b.calls;
  a.clamp_hits += b.clamp_hits;
}

}  // namespace detail

/// Decodes every scene, answers the POPE suite and scores the cell. Failures
/// are caught and reported through `ok` / `error`.
inline CellResult run_cell(const ExperimentData& d, const ExperimentSpec& spec, const GridCell& cell) {
  CellResult r;
  r.cell = cell;
  try {
    decode::DecodeConfig cfg = spec.decode;
    cfg.mode = cell.mode;
    cfg.strategy = cell.strategy;
    cfg.validate();
    const std::size_t n = detail::scene_count(d, spec);
    r.num_scenes = n;
    const std::uint64_t nucleus = sub_seed(spec.seed, kNucleusStream);
    std::vector<Json> rows;
    for (std::size_t i = 0; i < n; ++i) {
      const Scene& sc = d.corpus.scenes[i];
      decode::DecodeConfig ci = cfg;
      ci.seed = sub_seed(nucleus, i);
      ci.keep_logits = i < spec.trace_logit_scenes;
      const auto res = run_caption(d.model, d.vocab, ci, sc.objects);
      if (rows.empty()) rows.push_back(trace_header(cell.key(), cfg, d.model.config.num_layers, res.zones));
      CaptionRecord rec{sc.image_id, sc.objects, sc.bias_set, d.vocab.detokenize(res.tokens), res.tokens};
      if (spec.write_traces) append_trace_rows(rows, i, rec, res);
      detail::add_stats(r.stats, res.stats);
      r.captions.push_back(std::move(rec));
    }
    r.trace = to_jsonl(rows);

    std::map<std::string, std::size_t> scene_of;
    for (std::size_t i = 0; i < n; ++i) scene_of[d.corpus.scenes[i].image_id] = i;
    // group queries per image, keeping suite order
    std::vector<std::vector<std::size_t>> by_scene(n);
    for (std::size_t k = 0; k < d.pope.items.size(); ++k) {
      auto it = scene_of.find(d.pope.items[k].image_id);
      if (it != scene_of.end()) by_scene[it->second].push_back(k);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (by_scene[i].empty()) continue;
      std::vector<ObjectId> queries;
      for (std::size_t k : by_scene[i]) queries.push_back(d.pope.items[k].object);
      const auto ans = answer_questions(d.model, d.vocab, cfg, d.corpus.scenes[i].objects, queries);
      for (std::size_t j = 0; j < ans.size(); ++j) {
        metrics::PopeItem item = d.pope.items[by_scene[i][j]];
        item.answer_yes = ans[j].answer == decode::Answer::yes;
        detail::add_stats(r.stats, ans[j].stats);
        r.answers.push_back(item);
      }
    }

    const auto items = caption_items(r.captions, d.corpus.lexicon);
    r.amber = metrics::amber_lite(items);
    if (r.answers.empty()) throw ValidationError("no POPE items for the selected scenes");
    r.pope = metrics::pope_f1(r.answers);
    r.ok = true;
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
  }
  return r;
}

struct ExperimentResult {
  std::vector<CellResult> cells;  // sorted by cell key

  const CellResult& cell(const std::string& key) const {
    for (const auto& c : cells)
      if (c.cell.key() == key) return c;
    throw ValidationError("no cell '" + key + "'");
  }
};

inline const char* kSummaryHeader =
    "cell,mode,strategy,status,num_scenes,chair_s,chair_i,cover,hal,cog,pope_precision,pope_recall,pope_f1,"
    "pope_f1_random,pope_f1_popular,pope_f1_adversarial,mean_caption_tokens,modulation_calls,clamp_hits,error";

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else if (c == '\n') out += ' ';
    else out.push_back(c);
  }
  return out + "\"";
}

inline std::string summary_csv(const ExperimentResult& res) {
  std::string s = std::string(kSummaryHeader) + "\n";
  for (const auto& c : res.cells) {
    s += c.cell.key() + "," + decode::to_string(c.cell.mode) + "," + decode::to_string(c.cell.strategy) + ",";
    if (!c.ok) {
      s += "failed," + std::to_string(c.num_scenes) + ",,,,,,,,,,,,,,," + csv_escape(c.error) + "\n";
      continue;
    }
    std::size_t tokens = 0;
    for (const auto& cap : c.captions) tokens += cap.tokens.size();
    const double mean_tokens = c.captions.empty() ? 0.0 : double(tokens) / double(c.captions.size());
    s += "ok," + std::to_string(c.num_scenes) + "," + fmt(c.amber.chair.chair_s.value) + "," +
         fmt(c.amber.chair.chair_i.value) + "," + fmt(c.amber.cover.value) + "," + fmt(c.amber.hal.value) + "," +
         fmt(c.amber.cog.value) + "," + fmt(c.pope.overall.precision.value) + "," +
         fmt(c.pope.overall.recall.value) + "," + fmt(c.pope.overall.f1) + "," +
         fmt(c.pope.split(metrics::PopeSplit::random).f1) + "," + fmt(c.pope.split(metrics::PopeSplit::popular).f1) +
         "," + fmt(c.pope.split(metrics::PopeSplit::adversarial).f1) + "," + fmt(mean_tokens, 3) + "," +
         std::to_string(c.stats.calls) + "," + std::to_string(c.stats.clamp_hits) + ",\n";
  }
  return s;
}

inline Json cell_metrics_json(const CellResult& c) {
  Json j{{"cell", c.cell.key()}, {"status", c.ok ? "ok" : "failed"}, {"num_scenes", c.num_scenes}};
  if (!c.ok) {
    j["error"] = c.error;
    return j;
  }
  j["chair"] = amber_json(c.amber);
  j["pope"] = pope_report_json(c.pope);
  j["modulation_calls"] = c.stats.calls;
  j["clamp_hits"] = c.stats.clamp_hits;
  return j;
}

inline void write_cell(const std::filesystem::path& dir, const CellResult& c, const metrics::Lexicon& lex,
                       bool traces) {
  const auto cell_dir = dir / c.cell.key();
  std::filesystem::create_directories(cell_dir);
  write_text((cell_dir / "metrics.json").string(), cell_metrics_json(c).dump(2) + "\n");
  if (!c.ok) return;
  std::vector<Json> caps;
  for (const auto& cap : c.captions) caps.push_back(caption_json(cap));
  write_text((cell_dir / "captions.jsonl").string(), to_jsonl(caps));
  write_text((cell_dir / "pope_answers.jsonl").string(), pope_to_jsonl(c.answers, lex, true));
  if (traces) write_text((cell_dir / "trace.jsonl").string(), c.trace);
}

/// Runs every grid cell (up to `spec.jobs` at a time). With an output
/// directory, writes the effective spec, the summary and per-cell files.
inline ExperimentResult run_experiment(const ExperimentData& d, const ExperimentSpec& spec) {
  spec.validate();
  const auto cells = spec.cells();
  ExperimentResult res;
  res.cells.resize(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) res.cells[i] = run_cell(d, spec, cells[i]);
  };
  const std::size_t workers = std::min(spec.jobs, cells.size());
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (!spec.output_dir.empty()) {
    const std::filesystem::path dir(spec.output_dir);
    std::filesystem::create_directories(dir);
    write_text((dir / "summary.csv").string(), summary_csv(res));
    for (const auto& c : res.cells) write_cell(dir, c, d.corpus.lexicon, spec.write_traces);
  }
  return res;
}

}  // namespace lisa::harness
