// Copyright (C) 2026 The LISA Authors
// SPDX-License-Identifier: Apache-2.0

// lisa: corpus/model generation, grid runs, metric evaluation, figure export.
//
// Exit codes: 0 success, 2 validation or usage error, 3 runtime or numerical
// error. Errors are one line on stderr:
//   lisa: error code=<2|3> kind=<kind> message=<text>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lisa/harness/experiment.hpp"

namespace fs = std::filesystem;
using namespace lisa;
using namespace lisa::harness;

namespace {

class UsageError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

int report(int code, const std::string& kind, std::string message) {
  for (char& c : message)
    if (c == '\n' || c == '\r') c = ' ';
  std::cerr << "lisa: error code=" << code << " kind=" << kind << " message=" << message << "\n";
  return code;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  if (out.empty()) throw ValidationError("empty list '" + s + "'");
  return out;
}

double parse_number(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(what + ": '" + s + "' is not a number");
  }
}

Json load_config(const std::string& path) {
  if (path.empty()) return Json::object();
  const Json j = Json::parse(read_text(path), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ValidationError(path + ": config must be a JSON object");
  return j;
}

template <typename T>
T config_value(const Json& cfg, const char* key, T fallback) {
  if (!cfg.contains(key)) return fallback;
  try {
    return cfg.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(std::string("config key '") + key + "' has the wrong type");
  }
}

void check_keys(const Json& cfg, std::initializer_list<const char*> allowed) {
  for (auto it = cfg.begin(); it != cfg.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ValidationError("unknown config key '" + it.key() + "'");
  }
}

/// Flag > config file > fallback > LISA_SEED > 0.
std::uint64_t resolve_seed(const CLI::Option* flag, std::uint64_t flag_value, const Json& cfg,
                           std::optional<std::uint64_t> fallback) {
  if (flag->count()) return flag_value;
  if (cfg.contains("seed")) return config_value<std::uint64_t>(cfg, "seed", 0);
  if (fallback) return *fallback;
  if (const char* env = std::getenv("LISA_SEED")) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
      return v;
    } catch (const std::exception&) {
      throw ValidationError(std::string("LISA_SEED='") + env + "' is not an unsigned integer");
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

struct GenArgs {
  std::string config, data = "lisa_data";
  std::uint64_t seed = 0;
  std::size_t scenes = 0, objects = 0, lexicon = 0, bias_set = 0;
  double bias = 0.0;
  CLI::Option *o_seed, *o_data, *o_scenes, *o_objects, *o_lexicon, *o_bias, *o_bias_set;
};

int cmd_gen(const GenArgs& a) {
  const Json cfg = load_config(a.config);
  check_keys(cfg, {"seed", "data", "out", "jobs", "max_scenes", "trace_logit_scenes", "write_traces", "corpus",
                   "decode", "grid"});
  CorpusParams p = cfg.contains("corpus") ? corpus_params_from_json(cfg["corpus"]) : CorpusParams{};
  if (a.o_scenes->count()) p.num_scenes = a.scenes;
  if (a.o_objects->count()) p.objects_per_scene = a.objects;
  if (a.o_lexicon->count()) p.lexicon_size = a.lexicon;
  if (a.o_bias->count()) p.bias_strength = a.bias;
  if (a.o_bias_set->count()) p.bias_set_size = a.bias_set;
  p.validate();
  const std::uint64_t seed = resolve_seed(a.o_seed, a.seed, cfg, std::nullopt);
  const fs::path dir = a.o_data->count() ? a.data : config_value<std::string>(cfg, "data", a.data);

  const auto data = generate_data(p, seed);
  save_data(dir, data);
  const Json effective{{"command", "gen"}, {"seed", seed}, {"data", dir.string()}, {"corpus", corpus_params_json(p)}};
  write_text((dir / "effective_config.json").string(), effective.dump(2) + "\n");
  std::cout << "seed=" << seed << " scenes=" << data.corpus.scenes.size() << " lexicon=" << data.corpus.lexicon.size()
            << " objects_per_scene=" << p.objects_per_scene << " pope_items=" << data.pope.items.size()
            << " caption_gain=" << fmt(data.fit.caption_gain) << " fit_chair_s=" << fmt(data.fit.fit_chair_s)
            << " pope_gain=" << fmt(data.fit.pope_gain) << " fit_false_yes=" << fmt(data.fit.fit_false_yes) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

struct RunArgs {
  std::string config, data = "lisa_data", out = "lisa_out", mode = "lisa", strategy = "greedy", gamma = "0,0,1";
  std::string zone_policy = "thirds";
  double beta = 0.6, epsilon = 1e-7, temperature = 0.7, top_p = 0.9;
  std::size_t beam_size = 5, max_tokens = 512, jobs = 1, max_scenes = 0, trace_logits = 1;
  std::uint64_t seed = 0;
  bool per_head = false, no_traces = false;
  CLI::Option *o_data, *o_out, *o_mode, *o_strategy, *o_gamma, *o_zone, *o_beta, *o_eps, *o_temp, *o_top_p, *o_beam,
      *o_max_tokens, *o_jobs, *o_max_scenes, *o_trace_logits, *o_seed, *o_per_head, *o_no_traces;
};

int cmd_run(const RunArgs& a) {
  const Json cfg = load_config(a.config);
  check_keys(cfg, {"seed", "data", "out", "jobs", "max_scenes", "trace_logit_scenes", "write_traces", "corpus",
                   "decode", "grid"});
  ExperimentSpec spec;
  if (cfg.contains("decode")) spec.decode = decode_from_json(cfg["decode"], spec.decode);
  auto& d = spec.decode;
  if (a.o_beta->count()) d.beta = a.beta;
  if (a.o_eps->count()) d.epsilon = a.epsilon;
  if (a.o_temp->count()) d.temperature = a.temperature;
  if (a.o_top_p->count()) d.top_p = a.top_p;
  if (a.o_beam->count()) d.beam_size = a.beam_size;
  if (a.o_max_tokens->count()) d.max_tokens = a.max_tokens;
  if (a.o_per_head->count()) d.per_head = true;
  if (a.o_zone->count()) d.zone_policy = spectral::parse_zone_policy(a.zone_policy);
  if (a.o_gamma->count()) {
    std::vector<double> g;
    for (const auto& s : split_list(a.gamma)) g.push_back(parse_number(s, "--gamma"));
    if (g.size() == 1) d.gamma = {g[0], g[0], g[0]};
    else if (g.size() == 3) d.gamma = {g[0], g[1], g[2]};
    else throw ValidationError("--gamma needs three comma-separated values or one");
  }

  std::vector<std::string> modes{"lisa"}, strategies{"greedy"};
  if (cfg.contains("grid")) {
    const Json& g = cfg["grid"];
    modes = config_value<std::vector<std::string>>(g, "modes", modes);
    strategies = config_value<std::vector<std::string>>(g, "strategies", strategies);
  }
  if (a.o_mode->count()) modes = split_list(a.mode);
  if (a.o_strategy->count()) strategies = split_list(a.strategy);
  spec.modes.clear();
  spec.strategies.clear();
  for (const auto& m : modes) spec.modes.push_back(decode::parse_mode(m));
  for (const auto& s : strategies) spec.strategies.push_back(decode::parse_strategy(s));

  spec.jobs = a.o_jobs->count() ? a.jobs : config_value<std::size_t>(cfg, "jobs", 1);
  spec.max_scenes = a.o_max_scenes->count() ? a.max_scenes : config_value<std::size_t>(cfg, "max_scenes", 0);
  spec.trace_logit_scenes =
      a.o_trace_logits->count() ? a.trace_logits : config_value<std::size_t>(cfg, "trace_logit_scenes", 1);
  spec.write_traces = a.o_no_traces->count() ? false : config_value<bool>(cfg, "write_traces", true);
  const std::string data_dir = a.o_data->count() ? a.data : config_value<std::string>(cfg, "data", a.data);
  spec.output_dir = a.o_out->count() ? a.out : config_value<std::string>(cfg, "out", a.out);
  spec.validate();

  const auto data = load_data(data_dir);
  spec.seed = resolve_seed(a.o_seed, a.seed, cfg, data.master_seed);

  fs::create_directories(spec.output_dir);
  Json effective = spec_json(spec);
  effective["command"] = "run";
  effective["data"] = data_dir;
  effective["out"] = spec.output_dir;
  effective["data_master_seed"] = data.master_seed;
  write_text((fs::path(spec.output_dir) / "effective_config.json").string(), effective.dump(2) + "\n");

  const auto res = run_experiment(data, spec);
  std::cout << summary_csv(res);
  std::size_t failed = 0;
  for (const auto& c : res.cells) failed += c.ok ? 0 : 1;
  if (failed > 0)
    return report(3, "cell_failed", std::to_string(failed) + " of " + std::to_string(res.cells.size()) +
                                        " cells failed; see summary.csv");
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string captions, pope, corpus, csv, pooling = "corpus";
  std::size_t lexicon = 40;
};

int cmd_eval(const EvalArgs& a) {
  if (a.captions.empty() && a.pope.empty()) throw UsageError("eval needs --captions and/or --pope");
  metrics::Lexicon lex;
  if (!a.corpus.empty()) lex = corpus_from_jsonl(read_text(a.corpus), a.corpus).corpus.lexicon;
  else lex = make_lexicon(a.lexicon);
  metrics::ChairPooling pooling;
  if (a.pooling == "corpus") pooling = metrics::ChairPooling::corpus;
  else if (a.pooling == "per-caption") pooling = metrics::ChairPooling::per_caption;
  else throw UsageError("--pooling must be corpus or per-caption");

  MetricsReport rep;
  if (!a.captions.empty()) {
    const auto recs = captions_from_jsonl(read_text(a.captions), a.captions, lex);
    const auto items = caption_items(recs, lex);
    auto amber = metrics::amber_lite(items);
    amber.chair = metrics::chair_scores(items, pooling);
    rep.captions = amber;
    rep.num_captions = items.size();
  }
  if (!a.pope.empty()) {
    const auto items = pope_from_jsonl(read_text(a.pope), a.pope, lex, true);
    rep.pope = metrics::pope_f1(items);
    rep.num_pope = items.size();
  }
  std::cout << report_json(rep).dump() << "\n";
  if (!a.csv.empty()) write_text(a.csv, report_csv(rep));
  return 0;
}

// ---------------------------------------------------------------------------
// trace
// ---------------------------------------------------------------------------

struct TraceArgs {
  std::string input, scene, out;
  std::vector<std::string> kinds;
};

int cmd_trace(const TraceArgs& a) {
  std::vector<FigureKind> kinds;
  for (const auto& k : a.kinds) {
    try {
      kinds.push_back(parse_figure_kind(k));
    } catch (const ValidationError& ex) {
      throw UsageError(ex.what());
    }
  }
  if (kinds.size() > 1 && a.out.empty()) throw UsageError("several --kind values need --out");
  const auto trace = trace_from_jsonl(read_text(a.input), a.input);
  for (auto k : kinds) {
    const auto csv = export_figure_data(trace, k, a.scene);
    if (a.out.empty()) {
      std::cout << csv;
    } else {
      fs::create_directories(a.out);
      write_text((fs::path(a.out) / (std::string(to_string(k)) + ".csv")).string(), csv);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LISA spectral-suppression decoding toolkit"};
  app.require_subcommand(1);

  GenArgs g;
  auto* gen = app.add_subcommand("gen", "generate a corpus, POPE suite and biased model");
  gen->add_option("--config", g.config, "JSON config file");
  g.o_data = gen->add_option("--data,--out", g.data, "output data directory")->capture_default_str();
  g.o_seed = gen->add_option("--seed", g.seed, "master seed");
  g.o_scenes = gen->add_option("--scenes", g.scenes, "number of scenes (default 200)");
  g.o_objects = gen->add_option("--objects-per-scene", g.objects, "objects per scene (default 3)");
  g.o_lexicon = gen->add_option("--lexicon", g.lexicon, "lexicon size (default 16)");
  g.o_bias = gen->add_option("--bias-strength", g.bias, "partner co-occurrence probability (default 0.8)");
  g.o_bias_set = gen->add_option("--bias-set-size", g.bias_set, "bias objects per scene (default 2)");

  RunArgs r;
  auto* run = app.add_subcommand("run", "decode and score the (mode x strategy) grid");
  run->add_option("--config", r.config, "JSON config file");
  r.o_data = run->add_option("--data", r.data, "data directory written by gen")->capture_default_str();
  r.o_out = run->add_option("--out", r.out, "output directory")->capture_default_str();
  r.o_mode = run->add_option("--mode", r.mode, "vanilla|lisa|lisa-flat, comma-separated for a grid")
                 ->capture_default_str();
  r.o_strategy = run->add_option("--strategy", r.strategy, "greedy|beam|nucleus, comma-separated for a grid")
                     ->capture_default_str();
  r.o_beta = run->add_option("--beta", r.beta, "fusion weight")->capture_default_str();
  r.o_gamma = run->add_option("--gamma", r.gamma, "three comma-separated values, or one for all zones")
                  ->capture_default_str();
  r.o_eps = run->add_option("--epsilon", r.epsilon, "numerical epsilon")->capture_default_str();
  r.o_beam = run->add_option("--beam-size", r.beam_size, "beam width")->capture_default_str();
  r.o_temp = run->add_option("--temperature", r.temperature, "nucleus temperature")->capture_default_str();
  r.o_top_p = run->add_option("--top-p", r.top_p, "nucleus mass")->capture_default_str();
  r.o_max_tokens = run->add_option("--max-tokens", r.max_tokens, "caption length cap")->capture_default_str();
  r.o_zone = run->add_option("--zone-policy", r.zone_policy, "thirds|energy")->capture_default_str();
  r.o_per_head = run->add_flag("--per-head", r.per_head, "per-head energies and factors");
  r.o_seed = run->add_option("--seed", r.seed, "master seed for sampling (default: the data's master seed)");
  r.o_jobs = run->add_option("--jobs", r.jobs, "cells run in parallel")->capture_default_str();
  r.o_max_scenes = run->add_option("--max-scenes", r.max_scenes, "use the first N scenes (0 = all)");
  r.o_trace_logits =
      run->add_option("--trace-logits", r.trace_logits, "scenes whose trace keeps full fused logits")
          ->capture_default_str();
  r.o_no_traces = run->add_flag("--no-traces", r.no_traces, "skip trace files");

  EvalArgs e;
  auto* eval = app.add_subcommand("eval", "score caption and/or POPE answer files");
  eval->add_option("--captions", e.captions, "caption JSONL");
  eval->add_option("--pope", e.pope, "POPE answer JSONL");
  eval->add_option("--corpus", e.corpus, "take the lexicon from this corpus.jsonl");
  eval->add_option("--lexicon", e.lexicon, "built-in lexicon size")->capture_default_str();
  eval->add_option("--pooling", e.pooling, "CHAIR_I pooling: corpus|per-caption")->capture_default_str();
  eval->add_option("--csv", e.csv, "also write the report as CSV");

  TraceArgs t;
  auto* trace = app.add_subcommand("trace", "export figure data from a trace");
  trace->add_option("--input", t.input, "trace.jsonl")->required();
  trace->add_option("--kind", t.kinds, "token-prob|spectral|heatmap (repeatable)")->required();
  trace->add_option("--scene", t.scene, "image id (default: first scene)");
  trace->add_option("--out", t.out, "directory for <kind>.csv (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    return report(2, "usage", ex.what());
  }

  try {
    if (gen->parsed()) return cmd_gen(g);
    if (run->parsed()) return cmd_run(r);
    if (eval->parsed()) return cmd_eval(e);
    if (trace->parsed()) return cmd_trace(t);
  } catch (const UsageError& ex) {
    return report(2, "usage", ex.what());
  } catch (const LoadError& ex) {
    return report(2, std::string("load_") + to_string(ex.kind()), ex.what());
  } catch (const ValidationError& ex) {
    return report(2, "validation", ex.what());
  } catch (const CalibrationError& ex) {
    return report(3, "calibration", ex.what());
  } catch (const NumericalError& ex) {
    return report(3, "numerical", ex.what());
  } catch (const OverflowError& ex) {
    return report(3, "overflow", ex.what());
  } catch (const std::exception& ex) {
    return report(3, "runtime", ex.what());
  }
  return report(2, "usage", "no subcommand");
}
