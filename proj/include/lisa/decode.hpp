// Copyright (C) 2026 The LISA Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// Layer-integrated decoding: anchor routing, soft logit fusion and the
/// greedy / beam / nucleus strategies that consume the fused logits.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lisa/engine.hpp"
#include "lisa/errors.hpp"
#include "lisa/spectral.hpp"
#include "lisa/tensor.hpp"

namespace lisa::decode {

enum class Strategy { greedy, beam, nucleus };
enum class Mode { vanilla, lisa, lisa_flat };

inline const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::greedy: return "greedy";
    case Strategy::beam: return "beam";
    case Strategy::nucleus: return "nucleus";
  }
  return "?";
}

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::vanilla: return "vanilla";
    case Mode::lisa: return "lisa";
    case Mode::lisa_flat: return "lisa-flat";
  }
  return "?";
}

inline Strategy parse_strategy(const std::string& s) {
  if (s == "greedy") return Strategy::greedy;
  if (s == "beam") return Strategy::beam;
  if (s == "nucleus") return Strategy::nucleus;
  throw ValidationError("unknown strategy '" + s + "'");
}

inline Mode parse_mode(const std::string& s) {
  if (s == "vanilla") return Mode::vanilla;
  if (s == "lisa") return Mode::lisa;
  if (s == "lisa-flat" || s == "lisa_flat") return Mode::lisa_flat;
  throw ValidationError("unknown mode '" + s + "'");
}

/// Which layers feed the virtual fused anchor.
enum class FusionSet {
  interaction,  // the routing anchors themselves
  zone_representatives,  // interaction layers plus the middle layer of the other two zones
};

struct DecodeConfig {
  Strategy strategy = Strategy::greedy;
  std::size_t beam_size = 5;
  double temperature = 0.7;
  double top_p = 0.9;
  std::size_t max_tokens = 512;
  double beta = 0.6;
  double epsilon = 1e-7;
  std::array<double, 3> gamma{0.0, 0.0, 1.0};
  Mode mode = Mode::lisa;
  std::uint64_t seed = 0;

  spectral::ClampBounds clamp{};
  spectral::ZonePolicy zone_policy = spectral::ZonePolicy::thirds;
  bool per_head = false;
  FusionSet fusion_set = FusionSet::interaction;
  /// Restrict anchor routing to the k best final-layer candidates (0 = all).
  std::size_t top_k_prefilter = 0;
  /// Keep full logit vectors in StepRecords.
  bool keep_logits = true;
  std::optional<TokenId> eos_token;

  void validate() const {
    if (beam_size == 0) throw ValidationError("beam_size must be positive");
    if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw ValidationError("top_p must lie in (0, 1]");
    if (max_tokens == 0) throw ValidationError("max_tokens must be positive");
    if (!(beta >= 0.0 && beta <= 1.0)) throw ValidationError("beta must lie in [0, 1]");
    if (!(epsilon > 0.0)) throw ValidationError("epsilon must be positive");
    for (double g : gamma)
      if (!(g >= 0.0) || !std::isfinite(g)) throw ValidationError("gamma entries must be >= 0");
    if (!(clamp.min <= 1.0 && 1.0 <= clamp.max))
      throw ValidationError("clamp bounds must satisfy lambda_min <= 1 <= lambda_max");
  }

  /// Gamma actually applied: the flat ablation spreads the suppression-zone
  /// strength over every zone.
  std::array<double, 3> effective_gamma() const {
    if (mode == Mode::lisa_flat) return {gamma[2], gamma[2], gamma[2]};
    return gamma;
  }
};

// ---------------------------------------------------------------------------
// Anchors
// ---------------------------------------------------------------------------

/// Layer id used for the virtual fused anchor.
inline constexpr std::size_t kVirtualAnchor = 0;

struct Anchor {
  std::size_t layer = kVirtualAnchor;  // 1-based real layer, or kVirtualAnchor
  double stability = 0.0;
  std::vector<float> logits;
  std::vector<double> probs;

  bool is_virtual() const { return layer == kVirtualAnchor; }
};

/// Real interaction-zone anchors in ascending depth followed by the virtual anchor.
struct AnchorSet {
  std::vector<Anchor> members;
  std::vector<std::size_t> fusion_layers;
  std::vector<double> alpha;
};

inline std::vector<std::size_t> fusion_layers_for(const spectral::ZonePartition& zones, FusionSet set) {
  std::vector<std::size_t> layers;
  for (std::size_t l = zones.interaction.first; l <= zones.interaction.last; ++l) layers.push_back(l);
  if (set == FusionSet::zone_representatives) {
    auto mid = [](const spectral::LayerRange& r) { return r.first + (r.size() - 1) / 2; };
    layers.insert(layers.begin(), mid(zones.preservation));
    layers.push_back(mid(zones.suppression));
  }
  return layers;
}

/// Builds the routing set from one step's activations.
///
/// `alpha` weights the hidden states of `fusion_layers`; the virtual anchor
/// gets logit_lens of the fused hidden state and stability sum_l alpha_l s_l.
inline AnchorSet build_anchor_set(const Model& m, const LayerActivations& acts, const spectral::ZonePartition& zones,
                                  std::span<const std::size_t> fusion_layers, std::span<const double> alpha,
                                  double epsilon) {
  if (zones.interaction.size() == 0) throw ValidationError("build_anchor_set: empty interaction zone");
  if (!acts.has_lens()) throw ValidationError("build_anchor_set: activations lack per-layer logit lens");
  if (fusion_layers.size() != alpha.size() || fusion_layers.empty())
    throw ValidationError("build_anchor_set: fusion weights do not match fusion layers");

  auto layer_stability = [&](std::size_t l) {
    const auto& sp = acts.layers[l - 1].spectrum;
    return spectral::stability(sp.tr_q, sp.tr_k, epsilon);
  };

  AnchorSet set;
  for (std::size_t l = zones.interaction.first; l <= zones.interaction.last; ++l) {
    const auto& a = acts.layers[l - 1];
    set.members.push_back({l, layer_stability(l), a.logits, a.probs});
  }

  std::vector<std::span<const float>> hidden;
  double virtual_stability = 0.0;
  for (std::size_t i = 0; i < fusion_layers.size(); ++i) {
    hidden.emplace_back(acts.layers[fusion_layers[i] - 1].hidden);
    virtual_stability += alpha[i] * layer_stability(fusion_layers[i]);
  }
  const auto fused_hidden = spectral::fuse_hidden(alpha, hidden);
  Anchor virt;
  virt.layer = kVirtualAnchor;
  virt.stability = virtual_stability;
  virt.logits = logit_lens(m, fused_hidden);
  virt.probs = softmax(virt.logits);
  set.members.push_back(std::move(virt));
  set.fusion_layers.assign(fusion_layers.begin(), fusion_layers.end());
  set.alpha.assign(alpha.begin(), alpha.end());
  return set;
}

/// Convenience overload: alpha from the stabilities of the configured fusion set.
inline AnchorSet build_anchor_set(const Model& m, const LayerActivations& acts, const spectral::ZonePartition& zones,
                                  double epsilon, FusionSet set = FusionSet::interaction) {
  const auto layers = fusion_layers_for(zones, set);
  std::vector<double> s;
  for (std::size_t l : layers) {
    const auto& sp = acts.layers[l - 1].spectrum;
    s.push_back(spectral::stability(sp.tr_q, sp.tr_k, epsilon));
  }
  const auto alpha = spectral::fusion_weights(s);
  return build_anchor_set(m, acts, zones, layers, alpha, epsilon);
}

/// Index into `members` maximizing stability * p(c). Ties go to the deeper
/// real layer; the virtual anchor only wins with a strictly higher score.
inline std::size_t select_anchor(TokenId c, std::span<const Anchor> members) {
  if (members.empty()) throw ValidationError("select_anchor: empty anchor set");
  std::size_t best = members.size();
  double best_score = -std::numeric_limits<double>::infinity();
  auto consider = [&](std::size_t i) {
    const double score = members[i].stability * members[i].probs[c];
    if (best == members.size() || score > best_score) {
      best = i;
      best_score = score;
    }
  };
  std::vector<std::size_t> order(members.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = members[a];
    const auto& y = members[b];
    if (x.is_virtual() != y.is_virtual()) return !x.is_virtual();
    return x.layer > y.layer;
  });
  for (std::size_t i : order) consider(i);
  return best;
}

struct FusedLogits {
  std::vector<float> logits;
  /// Chosen member index per token; -1 where the prefilter skipped routing.
  std::vector<int> anchor_index;
};

/// z_hat(c) = (1 - beta) z_L(c) + beta z_{l*(c)}(c).
///
/// beta == 0 returns z_L bit-for-bit. With a prefilter of k > 0, tokens
/// outside the k best final-layer logits are masked to -inf.
inline FusedLogits fuse_logits(std::span<const float> final_logits, const AnchorSet& anchors, double beta,
                               std::size_t top_k_prefilter = 0) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ValidationError("fuse_logits: beta outside [0, 1]");
  const std::size_t V = final_logits.size();
  for (const auto& a : anchors.members)
    if (a.logits.size() != V || a.probs.size() != V) throw ValidationError("fuse_logits: dimension mismatch");

  FusedLogits out;
  out.logits.assign(final_logits.begin(), final_logits.end());
  out.anchor_index.assign(V, -1);

  std::vector<TokenId> candidates(V);
  std::iota(candidates.begin(), candidates.end(), TokenId{0});
  if (top_k_prefilter > 0 && top_k_prefilter < V) {
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](TokenId a, TokenId b) { return final_logits[a] > final_logits[b]; });
    for (std::size_t i = top_k_prefilter; i < V; ++i)
      out.logits[candidates[i]] = -std::numeric_limits<float>::infinity();
    candidates.resize(top_k_prefilter);
  }

  for (TokenId c : candidates) {
    const std::size_t a = select_anchor(c, anchors.members);
    out.anchor_index[c] = static_cast<int>(a);
    const float za = anchors.members[a].logits[c];
    if (beta == 0.0) continue;
    if (beta == 1.0) {
      out.logits[c] = za;
      continue;
    }
    out.logits[c] = static_cast<float>((1.0 - beta) * double(final_logits[c]) + beta * double(za));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Strategy primitives
// ---------------------------------------------------------------------------

/// Nucleus pick given a uniform draw u in [0, 1).
///
/// Tokens are ranked by probability (ties by id), the smallest prefix with
/// mass >= top_p is kept and u selects within it proportionally.
inline TokenId nucleus_pick(std::span<const float> logits, double temperature, double top_p, double u) {
  const auto p = softmax(logits, temperature);
  std::vector<TokenId> order(p.size());
  std::iota(order.begin(), order.end(), TokenId{0});
  std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId b) { return p[a] > p[b]; });
  double kept = 0.0;
  std::size_t n = 0;
  while (n < order.size() && (n == 0 || kept < top_p)) kept += p[order[n++]];
  const double target = u * kept;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += p[order[i]];
    if (target < acc) return order[i];
  }
  return order[n - 1];
}

/// Top `k` tokens by log-probability (ties by id).
inline std::vector<std::pair<TokenId, double>> top_candidates(std::span<const float> logits, std::size_t k) {
  const auto lp = log_softmax(logits);
  std::vector<TokenId> order(lp.size());
  std::iota(order.begin(), order.end(), TokenId{0});
  k = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](TokenId a, TokenId b) { return lp[a] > lp[b] || (lp[a] == lp[b] && a < b); });
  std::vector<std::pair<TokenId, double>> out;
  for (std::size_t i = 0; i < k; ++i) out.emplace_back(order[i], lp[order[i]]);
  return out;
}

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

struct AnchorSnapshot {
  std::size_t layer = kVirtualAnchor;
  double stability = 0.0;
  std::vector<float> logits;  // empty unless keep_logits
  std::vector<double> probs;  // empty unless keep_logits
};

struct StepRecord {
  std::size_t step = 0;
  TokenId token = 0;
  /// Logits the strategy consumed: fused in LISA modes, final-layer otherwise.
  std::vector<float> fused_logits;  // empty unless keep_logits
  std::vector<float> final_logits;  // empty unless keep_logits
  std::vector<AnchorSnapshot> anchors;
  /// l*(c) per vocabulary entry (layer id, kVirtualAnchor for the virtual
  /// anchor, -1 when not routed). Empty unless keep_logits.
  std::vector<int> selected_layer;
  /// l* of the emitted token; -1 in vanilla mode.
  int chosen_anchor = -1;
  /// Uniform draw used by nucleus sampling.
  double sample_u = 0.0;
  /// p_l(token) for each layer's logit lens.
  std::vector<double> layer_probs;
  spectral::SpectralProfile spectrum;
};

struct DecodeResult {
  std::vector<TokenId> tokens;
  std::vector<StepRecord> steps;
  ModulationStats stats;
  spectral::ZonePartition zones;
  double score = 0.0;  // length-normalized log-probability for beam search
};

/// Everything the strategies need that does not change during a decode.
struct DecodeContext {
  const Model* model = nullptr;
  DecodeConfig config;
  spectral::ZonePartition zones;
  std::optional<spectral::SpectralModulator> modulator;

  const spectral::SpectralModulator* modulator_ptr() const { return modulator ? &*modulator : nullptr; }

  StepOptions step_options() const {
    StepOptions o;
    o.epsilon = config.epsilon;
    return o;
  }
};

/// Zone partition for a decode. The energy policy reads the profile of an
/// unmodulated prefill of `prompt`.
inline spectral::ZonePartition resolve_zones(const Model& m, std::span<const TokenId> prompt, const DecodeConfig& cfg) {
  if (cfg.zone_policy == spectral::ZonePolicy::thirds)
    return spectral::partition_zones(nullptr, m.config.num_layers, spectral::ZonePolicy::thirds);
  KVCache probe(m.config);
  const auto acts = prefill(m, probe, prompt, nullptr);
  const auto profile = acts.profile();
  return spectral::partition_zones(&profile, m.config.num_layers, spectral::ZonePolicy::energy);
}

inline DecodeContext make_context(const Model& m, const DecodeConfig& cfg, const spectral::ZonePartition& zones) {
  cfg.validate();
  DecodeContext ctx{&m, cfg, zones, std::nullopt};
  if (cfg.mode != Mode::vanilla) {
    spectral::SpectralModulator mod;
    mod.gamma = cfg.effective_gamma();
    mod.epsilon = cfg.epsilon;
    mod.clamp = cfg.clamp;
    mod.zones = zones;
    mod.per_head = cfg.per_head;
    mod.validate(m.config.num_layers);
    ctx.modulator = mod;
  }
  return ctx;
}

/// The logits a strategy consumes at one step, with routing details.
struct StepScores {
  std::vector<float> logits;
  std::optional<AnchorSet> anchors;
  std::vector<int> anchor_index;
};

inline StepScores step_scores(const DecodeContext& ctx, const LayerActivations& acts) {
  StepScores s;
  for (std::size_t l = 0; l < acts.layers.size(); ++l)
    if (!all_finite(acts.layers[l].logits)) throw NumericalError(l + 1, "non-finite logits");
  if (ctx.config.mode == Mode::vanilla) {
    const auto z = acts.final_logits();
    s.logits.assign(z.begin(), z.end());
    return s;
  }
  auto anchors = build_anchor_set(*ctx.model, acts, ctx.zones, ctx.config.epsilon, ctx.config.fusion_set);
  auto fused = fuse_logits(acts.final_logits(), anchors, ctx.config.beta, ctx.config.top_k_prefilter);
  s.logits = std::move(fused.logits);
  s.anchor_index = std::move(fused.anchor_index);
  s.anchors = std::move(anchors);
  return s;
}

inline StepRecord make_record(const DecodeContext& ctx, std::size_t step, TokenId token, const LayerActivations& acts,
                              const StepScores& scores) {
  StepRecord r;
  r.step = step;
  r.token = token;
  r.spectrum = acts.profile();
  for (const auto& l : acts.layers) r.layer_probs.push_back(l.probs[token]);
  if (scores.anchors) {
    const auto& members = scores.anchors->members;
    const int idx = scores.anchor_index[token];
    r.chosen_anchor = idx < 0 ? -1 : static_cast<int>(members[static_cast<std::size_t>(idx)].layer);
    for (const auto& a : members) {
      AnchorSnapshot snap{a.layer, a.stability, {}, {}};
      if (ctx.config.keep_logits) {
        snap.logits = a.logits;
        snap.probs = a.probs;
      }
      r.anchors.push_back(std::move(snap));
    }
    if (ctx.config.keep_logits) {
      r.selected_layer.reserve(scores.anchor_index.size());
      for (int i : scores.anchor_index)
        r.selected_layer.push_back(i < 0 ? -1 : static_cast<int>(members[static_cast<std::size_t>(i)].layer));
    }
  }
  if (ctx.config.keep_logits) {
    r.fused_logits = scores.logits;
    const auto z = acts.final_logits();
    r.final_logits.assign(z.begin(), z.end());
  }
  return r;
}

namespace detail {

inline void check_room(const Model& m, std::size_t prompt_len, const DecodeConfig& cfg) {
  if (prompt_len == 0) throw ValidationError("decode: empty prompt");
  if (prompt_len + cfg.max_tokens > m.config.max_seq_len)
    throw OverflowError("prompt length " + std::to_string(prompt_len) + " + max_tokens " +
                        std::to_string(cfg.max_tokens) + " exceeds max_seq_len " +
                        std::to_string(m.config.max_seq_len));
}

inline DecodeResult run_sequential(const DecodeContext& ctx, KVCache cache, LayerActivations acts) {
  const Model& m = *ctx.model;
  const DecodeConfig& cfg = ctx.config;
  SplitMix64 rng(cfg.seed);
  DecodeResult res;
  res.zones = ctx.zones;
  for (std::size_t step = 0; step < cfg.max_tokens; ++step) {
    const StepScores scores = step_scores(ctx, acts);
    TokenId token = 0;
    double u = 0.0;
    if (cfg.strategy == Strategy::nucleus) {
      u = rng.uniform();
      token = nucleus_pick(scores.logits, cfg.temperature, cfg.top_p, u);
    } else {
      token = static_cast<TokenId>(argmax(scores.logits));
    }
    StepRecord rec = make_record(ctx, step, token, acts, scores);
    rec.sample_u = u;
    res.steps.push_back(std::move(rec));
    res.tokens.push_back(token);
    if (cfg.eos_token && token == *cfg.eos_token) break;
    if (step + 1 == cfg.max_tokens) break;
    acts = forward_step(m, cache, token, ctx.modulator_ptr(), ctx.step_options());
  }
  res.stats = cache.stats;
  return res;
}

struct Hypothesis {
  KVCache cache;
  LayerActivations acts;
  std::vector<TokenId> tokens;
  std::vector<StepRecord> steps;
  double logprob = 0.0;
};

inline DecodeResult run_beam(const DecodeContext& ctx, KVCache cache, LayerActivations acts) {
  const Model& m = *ctx.model;
  const DecodeConfig& cfg = ctx.config;
  const std::size_t width = cfg.beam_size;

  std::vector<Hypothesis> live;
  live.push_back({std::move(cache), std::move(acts), {}, {}, 0.0});
  struct Finished {
    Hypothesis hyp;
    double score;
  };
  std::vector<Finished> finished;
  auto normalized = [](const Hypothesis& h) { return h.logprob / static_cast<double>(h.tokens.size()); };

  for (std::size_t step = 0; step < cfg.max_tokens && !live.empty(); ++step) {
    struct Candidate {
      std::size_t parent;
      TokenId token;
      double logprob;
    };
    std::vector<Candidate> pool;
    std::vector<StepScores> scores;
    for (std::size_t h = 0; h < live.size(); ++h) {
      scores.push_back(step_scores(ctx, live[h].acts));
      for (auto [tok, lp] : top_candidates(scores.back().logits, width))
        pool.push_back({h, tok, live[h].logprob + lp});
    }
    std::stable_sort(pool.begin(), pool.end(), [](const Candidate& a, const Candidate& b) {
      if (a.logprob != b.logprob) return a.logprob > b.logprob;
      if (a.parent != b.parent) return a.parent < b.parent;
      return a.token < b.token;
    });

    const bool last_step = step + 1 == cfg.max_tokens;
    std::vector<Hypothesis> next;
    for (std::size_t rank = 0; rank < pool.size() && next.size() < width; ++rank) {
      const Candidate& c = pool[rank];
      const Hypothesis& parent = live[c.parent];
      const bool is_eos = cfg.eos_token && c.token == *cfg.eos_token;
      if (is_eos && rank >= width) continue;
      Hypothesis child{is_eos || last_step ? KVCache(m.config) : parent.cache, {}, parent.tokens, parent.steps,
                       c.logprob};
      child.tokens.push_back(c.token);
      child.steps.push_back(make_record(ctx, step, c.token, parent.acts, scores[c.parent]));
      if (is_eos || last_step) {
        child.cache.stats = parent.cache.stats;
        const double score = normalized(child);
        finished.push_back({std::move(child), score});
        continue;
      }
      child.acts = forward_step(m, child.cache, c.token, ctx.modulator_ptr(), ctx.step_options());
      next.push_back(std::move(child));
    }
    live = std::move(next);
    if (finished.size() >= width) break;
  }
  for (const auto& h : live) finished.push_back({h, normalized(h)});

  std::size_t best = 0;
  for (std::size_t i = 1; i < finished.size(); ++i)
    if (finished[i].score > finished[best].score) best = i;
  DecodeResult res;
  res.zones = ctx.zones;
  res.tokens = std::move(finished[best].hyp.tokens);
  res.steps = std::move(finished[best].hyp.steps);
  res.score = finished[best].score;
  res.stats = finished[best].hyp.cache.stats;
  return res;
}

}  // namespace detail

/// Continues a decode from a prefilled cache; `acts` are the activations of
/// the last prompt token (with per-layer logit lens).
inline DecodeResult decode_from(const DecodeContext& ctx, KVCache cache, LayerActivations acts) {
  if (ctx.config.strategy == Strategy::beam) return detail::run_beam(ctx, std::move(cache), std::move(acts));
  return detail::run_sequential(ctx, std::move(cache), std::move(acts));
}

/// Generates a continuation of `prompt`.
///
/// Vanilla mode runs the plain model on final-layer logits. The LISA modes
/// modulate attention during every forward step and hand the fused logits to
/// the strategy. Beam search ranks finished hypotheses by length-normalized
/// log-probability of the fused distributions.
inline DecodeResult decode(const Model& m, std::span<const TokenId> prompt, const DecodeConfig& cfg) {
  cfg.validate();
  detail::check_room(m, prompt.size(), cfg);
  const auto zones = resolve_zones(m, prompt, cfg);
  const DecodeContext ctx = make_context(m, cfg, zones);
  KVCache cache(m.config);
  auto acts = prefill(m, cache, prompt, ctx.modulator_ptr(), ctx.step_options());
  return decode_from(ctx, std::move(cache), std::move(acts));
}

/// Re-applies the strategy to a recorded step. For beam search the check is
/// that the token is among the beam_size best candidates of the record.
inline bool replays(const StepRecord& rec, const DecodeConfig& cfg) {
  if (rec.fused_logits.empty()) throw ValidationError("replays: record was made without keep_logits");
  switch (cfg.strategy) {
    case Strategy::greedy: return argmax(rec.fused_logits) == rec.token;
    case Strategy::nucleus:
      return nucleus_pick(rec.fused_logits, cfg.temperature, cfg.top_p, rec.sample_u) == rec.token;
    case Strategy::beam:
      for (auto [tok, lp] : top_candidates(rec.fused_logits, cfg.beam_size))
        if (tok == rec.token) return true;
      return false;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Binary answering
// ---------------------------------------------------------------------------

enum class Answer { no = 0, yes = 1 };

struct BinaryResult {
  Answer answer = Answer::no;
  float yes_logit = 0.0f;
  float no_logit = 0.0f;
  ModulationStats stats;
};

/// yes iff z(yes) > z(no) on the first-step scoring logits; ties answer no.
inline Answer restricted_argmax(float yes_logit, float no_logit) {
  return yes_logit > no_logit ? Answer::yes : Answer::no;
}

inline BinaryResult binary_from(const DecodeContext& ctx, const LayerActivations& acts, TokenId yes, TokenId no) {
  const auto scores = step_scores(ctx, acts);
  BinaryResult r;
  r.yes_logit = scores.logits[yes];
  r.no_logit = scores.logits[no];
  r.answer = restricted_argmax(r.yes_logit, r.no_logit);
  return r;
}

inline BinaryResult decode_binary(const Model& m, std::span<const TokenId> question, const DecodeConfig& cfg,
                                  TokenId yes, TokenId no) {
  cfg.validate();
  if (yes >= m.config.vocab_size || no >= m.config.vocab_size || yes == no)
    throw ValidationError("decode_binary: vocabulary lacks distinct yes/no tokens");
  if (question.empty() || question.size() > m.config.max_seq_len)
    throw OverflowError("decode_binary: question does not fit in max_seq_len");
  const auto zones = resolve_zones(m, question, cfg);
  const DecodeContext ctx = make_context(m, cfg, zones);
  KVCache cache(m.config);
  const auto acts = prefill(m, cache, question, ctx.modulator_ptr(), ctx.step_options());
  auto r = binary_from(ctx, acts, yes, no);
  r.stats = cache.stats;
  return r;
}

}  // namespace lisa::decode
