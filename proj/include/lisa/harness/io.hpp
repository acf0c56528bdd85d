// Copyright (C) 2026 The LISA Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// JSON-lines files: corpus, POPE suites and answers, captions, metric reports.
///
/// Object ids in every file are canonical lexicon ids. Readers also accept a
/// canonical name string wherever an id is expected.

#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lisa/errors.hpp"
#include "lisa/harness/corpus.hpp"
#include "lisa/harness/vocab.hpp"
#include "lisa/metrics.hpp"

namespace lisa::harness {

using Json = nlohmann::ordered_json;

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path + "'");
}

/// One parsed JSON line with its 1-based line number.
struct JsonLine {
  std::size_t line = 0;
  Json value;
};

/// Parses non-blank lines; every record must be a JSON object.
inline std::vector<JsonLine> parse_jsonl(const std::string& text, const std::string& name) {
  std::vector<JsonLine> out;
  std::istringstream in(text);
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json v = Json::parse(line, nullptr, false);
    if (v.is_discarded()) throw ValidationError(name + ":" + std::to_string(n) + ": invalid JSON");
    if (!v.is_object()) throw ValidationError(name + ":" + std::to_string(n) + ": record is not a JSON object");
    out.push_back({n, std::move(v)});
  }
  return out;
}

inline std::vector<JsonLine> read_jsonl(const std::string& path) { return parse_jsonl(read_text(path), path); }

inline std::string to_jsonl(const std::vector<Json>& rows) {
  std::string s;
  for (const auto& r : rows) {
    s += r.dump();
    s.push_back('\n');
  }
  return s;
}

/// Fixed-precision number for CSV output.
inline std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

namespace detail {

[[noreturn]] inline void schema_error(const std::string& name, std::size_t line, const std::string& what) {
  throw ValidationError(name + ":" + std::to_string(line) + ": " + what);
}

inline const Json& field(const JsonLine& l, const char* key, const std::string& name) {
  auto it = l.value.find(key);
  if (it == l.value.end()) schema_error(name, l.line, std::string("missing field '") + key + "'");
  return *it;
}

inline std::string string_field(const JsonLine& l, const char* key, const std::string& name) {
  const Json& v = field(l, key, name);
  if (!v.is_string()) schema_error(name, l.line, std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

inline ObjectId object_id(const Json& v, const metrics::Lexicon& lex, const JsonLine& l, const std::string& name) {
  if (v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0)) {
    const auto id = v.get<unsigned long long>();
    if (id >= lex.size()) schema_error(name, l.line, "object id " + std::to_string(id) + " is not in the lexicon");
    return static_cast<ObjectId>(id);
  }
  if (v.is_string()) {
    const auto key = metrics::join_words(metrics::words_of(v.get<std::string>()));
    if (const ObjectId* id = lex.lookup_surface(key)) return *id;
    schema_error(name, l.line, "unknown object '" + v.get<std::string>() + "'");
  }
  schema_error(name, l.line, "object must be a non-negative id or a name");
}

inline std::vector<ObjectId> object_list(const JsonLine& l, const char* key, const metrics::Lexicon& lex,
                                         const std::string& name) {
  const Json& v = field(l, key, name);
  if (!v.is_array()) schema_error(name, l.line, std::string("field '") + key + "' must be an array");
  std::vector<ObjectId> out;
  for (const auto& e : v) out.push_back(object_id(e, lex, l, name));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline bool yes_no(const Json& v, const JsonLine& l, const std::string& name, const char* key) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "yes") return true;
    if (s == "no") return false;
  }
  schema_error(name, l.line, std::string("field '") + key + "' must be \"yes\" or \"no\"");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

/// Surface forms of `id` other than its canonical name, in lexicographic order.
inline std::vector<std::string> synonyms_of(const metrics::Lexicon& lex, ObjectId id) {
  std::vector<std::string> out;
  for (const auto& [surface, o] : lex.surfaces())
    if (o == id && surface != lex.name(id)) out.push_back(surface);
  return out;
}

inline Json corpus_params_json(const CorpusParams& p) {
  return Json{{"num_scenes", p.num_scenes},
              {"objects_per_scene", p.objects_per_scene},
              {"lexicon_size", p.lexicon_size},
              {"bias_strength", p.bias_strength},
              {"bias_set_size", p.bias_set_size}};
}

inline CorpusParams corpus_params_from_json(const Json& j, CorpusParams p = {}) {
  if (!j.is_object()) throw ValidationError("corpus parameters must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    if (k == "num_scenes") p.num_scenes = it->get<std::size_t>();
    else if (k == "objects_per_scene") p.objects_per_scene = it->get<std::size_t>();
    else if (k == "lexicon_size") p.lexicon_size = it->get<std::size_t>();
    else if (k == "bias_strength") p.bias_strength = it->get<double>();
    else if (k == "bias_set_size") p.bias_set_size = it->get<std::size_t>();
    else throw ValidationError("unknown corpus key '" + k + "'");
  }
  return p;
}

/// Header line, then one line per scene with its visual-prefix token ids.
inline std::string corpus_to_jsonl(const Corpus& c, std::uint64_t master_seed, const Vocabulary& vocab) {
  std::vector<Json> rows;
  Json lex = Json::array();
  for (ObjectId o = 0; o < c.lexicon.size(); ++o)
    lex.push_back({{"id", o}, {"name", c.lexicon.name(o)}, {"synonyms", synonyms_of(c.lexicon, o)}});
  rows.push_back({{"type", "corpus"},
                  {"master_seed", master_seed},
                  {"seed", c.seed},
                  {"params", corpus_params_json(c.params)},
                  {"lexicon", lex}});
  for (const auto& s : c.scenes) {
    Json names = Json::array();
    for (ObjectId o : s.objects) names.push_back(c.lexicon.name(o));
    rows.push_back({{"type", "scene"},
                    {"image_id", s.image_id},
                    {"objects", s.objects},
                    {"object_names", names},
                    {"visual_prefix", vocab.visual_prefix(s.objects)},
                    {"bias_set", s.bias_set}});
  }
  return to_jsonl(rows);
}

struct LoadedCorpus {
  Corpus corpus;
  std::uint64_t master_seed = 0;
};

inline LoadedCorpus corpus_from_jsonl(const std::string& text, const std::string& name) {
  const auto lines = parse_jsonl(text, name);
  if (lines.empty()) throw ValidationError(name + ": empty corpus");
  const auto& h = lines.front();
  if (detail::string_field(h, "type", name) != "corpus") detail::schema_error(name, h.line, "expected a corpus header");
  LoadedCorpus out;
  try {
    out.master_seed = detail::field(h, "master_seed", name).get<std::uint64_t>();
    out.corpus.seed = detail::field(h, "seed", name).get<std::uint64_t>();
    out.corpus.params = corpus_params_from_json(detail::field(h, "params", name));
    for (const auto& e : detail::field(h, "lexicon", name))
      out.corpus.lexicon.add(e.at("name").get<std::string>(), e.at("synonyms").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    detail::schema_error(name, h.line, e.what());
  }
  out.corpus.params.num_scenes = lines.size() - 1;
  out.corpus.params.validate();
  if (out.corpus.lexicon.size() != out.corpus.params.lexicon_size)
    detail::schema_error(name, h.line, "lexicon length does not match lexicon_size");
  std::vector<std::vector<ObjectId>> sets;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& l = lines[i];
    if (detail::string_field(l, "type", name) != "scene") detail::schema_error(name, l.line, "expected a scene record");
    Scene s;
    s.image_id = detail::string_field(l, "image_id", name);
    s.objects = detail::object_list(l, "objects", out.corpus.lexicon, name);
    s.bias_set = detail::object_list(l, "bias_set", out.corpus.lexicon, name);
    if (s.objects.empty()) detail::schema_error(name, l.line, "scene has no objects");
    sets.push_back(s.objects);
    out.corpus.scenes.push_back(std::move(s));
  }
  out.corpus.stats = metrics::CooccurrenceStats::from_sets(out.corpus.lexicon.size(), sets);
  return out;
}

// ---------------------------------------------------------------------------
// POPE
// ---------------------------------------------------------------------------

inline Json pope_item_json(const metrics::PopeItem& it, const metrics::Lexicon& lex, bool with_answer) {
  Json j{{"image_id", it.image_id},
         {"object", it.object},
         {"object_name", lex.name(it.object)},
         {"split", metrics::to_string(it.split)},
         {"gold", it.gold_yes ? "yes" : "no"}};
  if (with_answer) j["answer"] = it.answer_yes ? "yes" : "no";
  return j;
}

inline std::string pope_to_jsonl(std::span<const metrics::PopeItem> items, const metrics::Lexicon& lex,
                                 bool with_answer) {
  std::vector<Json> rows;
  for (const auto& it : items) rows.push_back(pope_item_json(it, lex, with_answer));
  return to_jsonl(rows);
}

inline std::vector<metrics::PopeItem> pope_from_jsonl(const std::string& text, const std::string& name,
                                                      const metrics::Lexicon& lex, bool require_answer) {
  std::vector<metrics::PopeItem> out;
  for (const auto& l : parse_jsonl(text, name)) {
    metrics::PopeItem it;
    it.image_id = detail::string_field(l, "image_id", name);
    it.object = detail::object_id(detail::field(l, "object", name), lex, l, name);
    try {
      it.split = metrics::parse_split(detail::string_field(l, "split", name));
    } catch (const ValidationError& e) {
      detail::schema_error(name, l.line, e.what());
    }
    it.gold_yes = detail::yes_no(detail::field(l, "gold", name), l, name, "gold");
    if (l.value.contains("answer"))
      it.answer_yes = detail::yes_no(l.value["answer"], l, name, "answer");
    else if (require_answer)
      detail::schema_error(name, l.line, "missing field 'answer'");
    out.push_back(it);
  }
  if (out.empty()) throw ValidationError(name + ": empty corpus");
  return out;
}

// ---------------------------------------------------------------------------
// Captions
// ---------------------------------------------------------------------------

struct CaptionRecord {
  std::string image_id;
  std::vector<ObjectId> ground_truth;
  std::vector<ObjectId> bias_set;
  std::string caption;
  std::vector<TokenId> tokens;  // optional, empty when read from plain caption files
};

inline Json caption_json(const CaptionRecord& r) {
  Json j{{"image_id", r.image_id}, {"ground_truth", r.ground_truth}, {"bias_set", r.bias_set}, {"caption", r.caption}};
  if (!r.tokens.empty()) j["tokens"] = r.tokens;
  return j;
}

inline std::vector<CaptionRecord> captions_from_jsonl(const std::string& text, const std::string& name,
                                                      const metrics::Lexicon& lex) {
  std::vector<CaptionRecord> out;
  for (const auto& l : parse_jsonl(text, name)) {
    CaptionRecord r;
    r.image_id = detail::string_field(l, "image_id", name);
    r.ground_truth = detail::object_list(l, "ground_truth", lex, name);
    r.bias_set = l.value.contains("bias_set") ? detail::object_list(l, "bias_set", lex, name) : std::vector<ObjectId>{};
    r.caption = detail::string_field(l, "caption", name);
    if (r.ground_truth.empty()) detail::schema_error(name, l.line, "ground_truth is empty");
    out.push_back(std::move(r));
  }
  if (out.empty()) throw ValidationError(name + ": empty corpus");
  return out;
}

inline std::vector<metrics::CaptionItem> caption_items(std::span<const CaptionRecord> recs,
                                                       const metrics::Lexicon& lex) {
  std::vector<metrics::CaptionItem> items;
  items.reserve(recs.size());
  for (const auto& r : recs)
    items.push_back({metrics::extract_mentions(r.caption, lex), {r.image_id, r.ground_truth, "synthetic"}, r.bias_set});
  return items;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline Json ratio_json(const metrics::Ratio& r) {
  return Json{{"value", r.value}, {"numerator", r.numerator}, {"denominator", r.denominator}, {"degenerate", r.degenerate}};
}

inline Json prf_json(const metrics::PrfScores& s) {
  return Json{{"precision", ratio_json(s.precision)},
              {"recall", ratio_json(s.recall)},
              {"f1", s.f1},
              {"f1_degenerate", s.f1_degenerate},
              {"tp", s.counts.tp},
              {"fp", s.counts.fp},
              {"fn", s.counts.fn},
              {"tn", s.counts.tn}};
}

inline Json pope_report_json(const metrics::PopeReport& r) {
  Json j{{"overall", prf_json(r.overall)}};
  for (auto s : metrics::kPopeSplits) j[metrics::to_string(s)] = prf_json(r.split(s));
  return j;
}

inline Json amber_json(const metrics::AmberScores& a) {
  return Json{{"chair_s", ratio_json(a.chair.chair_s)},
              {"chair_i", ratio_json(a.chair.chair_i)},
              {"cover", ratio_json(a.cover)},
              {"hal", ratio_json(a.hal)},
              {"cog", ratio_json(a.cog)}};
}

/// Metric report of a standalone evaluation; either part may be absent.
struct MetricsReport {
  std::optional<metrics::AmberScores> captions;
  std::size_t num_captions = 0;
  std::optional<metrics::PopeReport> pope;
  std::size_t num_pope = 0;
};

inline Json report_json(const MetricsReport& r) {
  Json j = Json::object();
  if (r.captions) {
    j["num_captions"] = r.num_captions;
    j["chair"] = amber_json(*r.captions);
  }
  if (r.pope) {
    j["num_pope_items"] = r.num_pope;
    j["pope"] = pope_report_json(*r.pope);
  }
  return j;
}

/// Columns: metric,value,numerator,denominator
inline std::string report_csv(const MetricsReport& r) {
  std::string s = "metric,value,numerator,denominator\n";
  auto row = [&](const std::string& name, const metrics::Ratio& x) {
    s += name + "," + fmt(x.value) + "," + fmt(x.numerator) + "," + fmt(x.denominator) + "\n";
  };
  if (r.captions) {
    row("chair_s", r.captions->chair.chair_s);
    row("chair_i", r.captions->chair.chair_i);
    row("cover", r.captions->cover);
    row("hal", r.captions->hal);
    row("cog", r.captions->cog);
  }
  if (r.pope) {
    auto prf = [&](const std::string& p, const metrics::PrfScores& x) {
      row(p + "precision", x.precision);
      row(p + "recall", x.recall);
      s += p + "f1," + fmt(x.f1) + ",,\n";
    };
    prf("pope_", r.pope->overall);
    for (auto sp : metrics::kPopeSplits) prf(std::string("pope_") + metrics::to_string(sp) + "_", r.pope->split(sp));
  }
  return s;
}

}  // namespace lisa::harness
