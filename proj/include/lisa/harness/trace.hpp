// Copyright (C) 2026 The LISA Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// Decode traces (JSON lines) and figure-data CSV export.
///
/// A trace file holds, in order:
///
///     {"type":"header", cell, mode, strategy, num_layers, zones:{preservation:[a,b],...}}
///     per scene:
///       {"type":"caption", image_id, scene, tokens, caption}
///       per step:  {"type":"step", image_id, step, token, chosen_anchor, sample_u
///                   [, fused_logits, anchors:[{layer, stability}]]}
///       per layer: {"type":"layer", image_id, step, layer, token, prob, tr_q, tr_k,
///                   lambda_q, lambda_k, stability, clamp_q, clamp_k, anchor}
///
/// Within a scene rows are sorted by (step, layer). `chosen_anchor` is the layer
/// whose logits the chosen token was fused with (0 = virtual anchor, -1 = none).

#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "lisa/decode.hpp"
#include "lisa/harness/io.hpp"

namespace lisa::harness {

inline Json zones_json(const spectral::ZonePartition& z) {
  return Json{{"preservation", {z.preservation.first, z.preservation.last}},
              {"interaction", {z.interaction.first, z.interaction.last}},
              {"suppression", {z.suppression.first, z.suppression.last}}};
}

inline Json trace_header(const std::string& cell, const decode::DecodeConfig& cfg, std::size_t num_layers,
                         const spectral::ZonePartition& zones) {
  return Json{{"type", "header"},
              {"cell", cell},
              {"mode", decode::to_string(cfg.mode)},
              {"strategy", decode::to_string(cfg.strategy)},
              {"num_layers", num_layers},
              {"zones", zones_json(zones)}};
}

/// Rows for one decoded scene.
inline void append_trace_rows(std::vector<Json>& rows, std::size_t scene, const CaptionRecord& caption,
                              const decode::DecodeResult& res) {
  rows.push_back({{"type", "caption"},
                  {"image_id", caption.image_id},
                  {"scene", scene},
                  {"tokens", res.tokens},
                  {"caption", caption.caption}});
  for (const auto& st : res.steps) {
    Json step{{"type", "step"},
              {"image_id", caption.image_id},
              {"step", st.step},
              {"token", st.token},
              {"chosen_anchor", st.chosen_anchor},
              {"sample_u", st.sample_u}};
    if (!st.fused_logits.empty()) {
      step["fused_logits"] = st.fused_logits;
      Json anchors = Json::array();
      for (const auto& a : st.anchors) anchors.push_back({{"layer", a.layer}, {"stability", a.stability}});
      step["anchors"] = anchors;
    }
    rows.push_back(std::move(step));
    for (std::size_t l = 0; l < st.spectrum.layers.size(); ++l) {
      const auto& sp = st.spectrum.layers[l];
      const bool is_anchor = std::any_of(st.anchors.begin(), st.anchors.end(),
                                         [&](const decode::AnchorSnapshot& a) { return a.layer == l + 1; });
      rows.push_back({{"type", "layer"},
                      {"image_id", caption.image_id},
                      {"step", st.step},
                      {"layer", l + 1},
                      {"token", st.token},
                      {"prob", st.layer_probs[l]},
                      {"tr_q", sp.tr_q},
                      {"tr_k", sp.tr_k},
                      {"lambda_q", sp.lambda_q},
                      {"lambda_k", sp.lambda_k},
                      {"stability", sp.stability},
                      {"clamp_q", sp.clamp_q},
                      {"clamp_k", sp.clamp_k},
                      {"anchor", is_anchor}});
    }
  }
}

// ---------------------------------------------------------------------------
// Reading
// ---------------------------------------------------------------------------

struct TraceLayerRow {
  std::size_t step = 0;
  std::size_t layer = 0;
  TokenId token = 0;
  double prob = 0.0;
  double tr_q = 0.0;
  double tr_k = 0.0;
};

struct TraceScene {
  std::string image_id;
  std::vector<TokenId> tokens;
  std::string caption;
  std::vector<TraceLayerRow> layers;  // sorted by (step, layer)
};

struct Trace {
  std::string cell;
  std::size_t num_layers = 0;
  spectral::ZonePartition zones;
  std::vector<TraceScene> scenes;

  const TraceScene& scene(const std::string& image_id) const {
    if (image_id.empty()) {
      if (scenes.empty()) throw ValidationError("trace has no scenes");
      return scenes.front();
    }
    for (const auto& s : scenes)
      if (s.image_id == image_id) return s;
    throw ValidationError("trace has no scene '" + image_id + "'");
  }
};

inline Trace trace_from_jsonl(const std::string& text, const std::string& name) {
  const auto lines = parse_jsonl(text, name);
  if (lines.empty()) throw ValidationError(name + ": empty trace");
  Trace t;
  std::map<std::string, std::size_t> index;
  try {
    for (const auto& l : lines) {
      const auto type = detail::string_field(l, "type", name);
      const Json& v = l.value;
      if (type == "header") {
        t.cell = v.at("cell").get<std::string>();
        t.num_layers = v.at("num_layers").get<std::size_t>();
        const auto& z = v.at("zones");
        auto range = [&](const char* k) {
          return spectral::LayerRange{z.at(k).at(0).get<std::size_t>(), z.at(k).at(1).get<std::size_t>()};
        };
        t.zones = {range("preservation"), range("interaction"), range("suppression")};
      } else if (type == "caption") {
        TraceScene s;
        s.image_id = v.at("image_id").get<std::string>();
        s.tokens = v.at("tokens").get<std::vector<TokenId>>();
        s.caption = v.at("caption").get<std::string>();
        index[s.image_id] = t.scenes.size();
        t.scenes.push_back(std::move(s));
      } else if (type == "layer") {
        const auto id = v.at("image_id").get<std::string>();
        auto it = index.find(id);
        if (it == index.end()) detail::schema_error(name, l.line, "layer row before its caption row");
        t.scenes[it->second].layers.push_back({v.at("step").get<std::size_t>(), v.at("layer").get<std::size_t>(),
                                               v.at("token").get<TokenId>(), v.at("prob").get<double>(),
                                               v.at("tr_q").get<double>(), v.at("tr_k").get<double>()});
      } else if (type != "step") {
        detail::schema_error(name, l.line, "unknown row type '" + type + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(name + ": " + e.what());
  }
  if (t.num_layers == 0) throw ValidationError(name + ": trace has no header");
  return t;
}

// ---------------------------------------------------------------------------
// Figure data
// ---------------------------------------------------------------------------

enum class FigureKind { token_prob, spectral, heatmap };

inline FigureKind parse_figure_kind(const std::string& s) {
  if (s == "token-prob") return FigureKind::token_prob;
  if (s == "spectral") return FigureKind::spectral;
  if (s == "heatmap") return FigureKind::heatmap;
  throw ValidationError("unknown figure kind '" + s + "' (expected token-prob, spectral or heatmap)");
}

inline const char* to_string(FigureKind k) {
  switch (k) {
    case FigureKind::token_prob: return "token-prob";
    case FigureKind::spectral: return "spectral";
    case FigureKind::heatmap: return "heatmap";
  }
  return "?";
}

/// CSV for one scene of a trace (the first scene when `image_id` is empty).
///
///   token-prob: step,token,layer,prob                    L rows per generated token
///   spectral:   row,layer,tr_q,tr_k,tr_total,zone        L layer rows at the last step,
///               then one boundary row per zone (layer = first layer of the zone)
///   heatmap:    step,layer_1,...,layer_L                 one row per step
inline std::string export_figure_data(const Trace& trace, FigureKind kind, const std::string& image_id = {}) {
  const TraceScene& sc = trace.scene(image_id);
  if (sc.layers.empty()) throw ValidationError("trace scene '" + sc.image_id + "' has no steps");
  const std::size_t L = trace.num_layers;
  std::string s;
  switch (kind) {
    case FigureKind::token_prob:
      s = "step,token,layer,prob\n";
      for (const auto& r : sc.layers)
        s += std::to_string(r.step) + "," + std::to_string(r.token) + "," + std::to_string(r.layer) + "," +
             fmt(r.prob, 9) + "\n";
      break;
    case FigureKind::spectral: {
      s = "row,layer,tr_q,tr_k,tr_total,zone\n";
      const std::size_t last = sc.layers.back().step;
      for (const auto& r : sc.layers) {
        if (r.step != last) continue;
        s += "layer," + std::to_string(r.layer) + "," + fmt(r.tr_q) + "," + fmt(r.tr_k) + "," +
             fmt(r.tr_q + r.tr_k) + "," + spectral::to_string(trace.zones.zone_of(r.layer)) + "\n";
      }
      for (auto z : {spectral::Zone::preservation, spectral::Zone::interaction, spectral::Zone::suppression})
        s += "boundary," + std::to_string(trace.zones.range(z).first) + ",,,," + spectral::to_string(z) + "\n";
      break;
    }
    case FigureKind::heatmap: {
      s = "step";
      for (std::size_t l = 1; l <= L; ++l) s += ",layer_" + std::to_string(l);
      s += "\n";
      for (std::size_t i = 0; i < sc.layers.size(); i += L) {
        s += std::to_string(sc.layers[i].step);
        for (std::size_t l = 0; l < L && i + l < sc.layers.size(); ++l) s += "," + fmt(sc.layers[i + l].prob, 9);
        s += "\n";
      }
      break;
    }
  }
  return s;
}

}  // namespace lisa::harness
