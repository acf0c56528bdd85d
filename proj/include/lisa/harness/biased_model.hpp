// Copyright (C) 2026 The LISA Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// Hand-wired decoder whose deep layers inject co-occurrence bias.
///
/// Residual channels (raw units; every token carries `const_level` on 0):
///
///     0 const   1 visual flag   2 bos flag   3 found   4 question mark
///     8 + o        P_o  object o is in the image
///     8 + N + o    I_o  object o is the current token / the queried object
///     8 + 2N + o   D_o  object o may no longer be mentioned
///
/// Circuit:
///   - layer 1, head 0 copies P from the visual prefix to text positions;
///     head 1 copies I of the queried object to the question mark.
///   - first interaction layer, head 0 looks the queried object up in the
///     visual prefix and writes `found`.
///   - every suppression-zone layer, head 0 attends the visual prefix against
///     a <bos> sink and writes P_q in proportion to how often q co-occurs with
///     the visible objects; its FFN raises `found` for absent objects that
///     co-occur with the visible ones. Both gains are fitted on held-out scenes.
///   - remaining heads carry seeded query/key noise with zero values.
///
/// Readout: object o scores A*P_o - B*[D_o] - r*(o + 1), <eos> a constant,
/// yes/no compare `found` against a threshold behind a question-mark gate,
/// every other token sits at a low constant.

#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "lisa/decode.hpp"
#include "lisa/engine.hpp"
#include "lisa/errors.hpp"
#include "lisa/harness/corpus.hpp"
#include "lisa/harness/tasks.hpp"
#include "lisa/harness/vocab.hpp"
#include "lisa/metrics.hpp"

namespace lisa::harness {

struct BiasedModelParams {
  std::size_t num_layers = 8;
  std::size_t num_heads = 4;
  std::size_t min_vocab = 512;
  double const_level = 16.0;

  // attention logits the circuit is wired for
  double presence_score = 10.0;
  double copy_score = 12.0;
  double copy_sink = 6.0;
  double lookup_match = 10.0;
  double lookup_visual = 8.0;
  double lookup_sink = 14.0;
  double corrupt_visual = 10.0;
  double corrupt_sink = 12.0;
  double visual_gate = 30.0;

  // query norm relative to a balanced split of each score; sets the energy profile
  double shallow_query = 1.0;
  double deep_query = 4.0;
  double noise = 0.05;

  // readout
  double object_gain = 6.0;
  double mask_penalty = 12.0;
  double order_slope = 0.05;
  double eos_logit = 3.0;
  double filler_logit = -20.0;
  double yes_gain = 8.0;
  double yes_offset = 6.0;
  double no_logit = -2.0;
  double question_gate = 20.0;

  // deep FFN detector
  double ffn_match = 20.0;
  double ffn_cooccur = 4.0;
  double ffn_threshold = 2.0;

  // fitting
  std::size_t fit_scenes = 40;
  double target_chair_s = 0.3;
  double min_chair_s = 0.10;
  double target_false_yes = 0.5;
  double start_gain = 0.125;
  std::size_t max_doublings = 12;
  std::size_t refine_steps = 4;

  void validate() const {
    if (num_layers < 3) throw ValidationError("biased model needs at least 3 layers");
    if (num_heads < 2) throw ValidationError("biased model needs at least 2 heads");
    if (fit_scenes == 0) throw ValidationError("fit_scenes must be positive");
    if (!(min_chair_s <= target_chair_s)) throw ValidationError("min_chair_s must not exceed target_chair_s");
  }
};

struct GainTrial {
  double gain = 0.0;
  double metric = 0.0;
};

struct FitReport {
  double caption_gain = 0.0;
  double pope_gain = 0.0;
  double fit_chair_s = 0.0;
  double fit_false_yes = 0.0;
  std::vector<GainTrial> caption_trials;
  std::vector<GainTrial> pope_trials;
  /// Mean Tr_Q + Tr_K per zone on the first fit scene's caption prompt.
  std::array<double, 3> zone_energy{};
};

struct BiasedModel {
  Model model;
  Vocabulary vocab;
  FitReport fit;
};

namespace detail {

struct Layout {
  std::size_t n;  // objects
  std::size_t d;
  std::size_t dk;
  static constexpr std::size_t kConst = 0, kVisual = 1, kBos = 2, kFound = 3, kQuestion = 4;
  std::size_t P(ObjectId o) const { return 8 + o; }
  std::size_t I(ObjectId o) const { return 8 + n + o; }
  std::size_t D(ObjectId o) const { return 8 + 2 * n + o; }
  std::size_t col(std::size_t head, std::size_t dim) const { return head * dk + dim; }
};

inline ModelConfig biased_config(const Corpus& corpus, const BiasedModelParams& p, std::size_t vocab_size) {
  const std::size_t n = corpus.params.lexicon_size;
  ModelConfig cfg;
  cfg.num_layers = p.num_layers;
  cfg.num_heads = p.num_heads;
  cfg.hidden_dim = p.num_heads * std::max<std::size_t>(16, n + 3);
  cfg.vocab_size = vocab_size;
  cfg.max_seq_len = 1024;
  cfg.visual_prefix_len = corpus.params.objects_per_scene;
  cfg.ffn_dim = n;
  cfg.validate();
  return cfg;
}

struct Gains {
  double caption = 0.0;
  double pope = 0.0;
};

inline Model wire_model(const Corpus& corpus, const BiasedModelParams& p, const Vocabulary& vocab, const Gains& g,
                        std::uint64_t noise_seed) {
  const ModelConfig cfg = biased_config(corpus, p, vocab.size());
  Model m{cfg, zero_weights(cfg)};
  auto& w = m.weights;
  const std::size_t n = corpus.params.lexicon_size;
  const Layout lay{n, cfg.hidden_dim, cfg.head_dim()};
  const double K = p.const_level;
  const double u = 1.0 / std::sqrt((K * K + 3.0) / static_cast<double>(cfg.hidden_dim));
  const double sdk = std::sqrt(static_cast<double>(lay.dk));
  const double nvis = static_cast<double>(corpus.params.objects_per_scene);
  const auto zones = spectral::partition_zones(nullptr, cfg.num_layers, spectral::ZonePolicy::thirds);
  const std::size_t lookup_layer = zones.interaction.first - 1;  // 0-based
  const std::size_t deep_first = zones.suppression.first - 1;
  const double n_deep = static_cast<double>(zones.suppression.size());

  // Query channel qc (normalized value qv) against key channel kc (value kv)
  // scores `score`; the query entry is rho * sqrt(score * sqrt(dk)).
  auto wire_score = [&](LayerWeights& L, std::size_t col, std::size_t qc, double qv, double rho, std::size_t kc,
                        double kv, double score) {
    const double q = rho * std::sqrt(score * sdk);
    L.wq(qc, col) = static_cast<float>(q / qv);
    L.wk(kc, col) += static_cast<float>(score * sdk / (q * kv));
  };
  auto F = [](double x) { return static_cast<float>(x); };

  // embeddings
  for (TokenId t = 0; t < cfg.vocab_size; ++t) w.token_embedding(t, Layout::kConst) = F(K);
  w.token_embedding(Vocabulary::kBos, Layout::kBos) = 1.0f;
  w.token_embedding(vocab.word("?"), Layout::kQuestion) = 1.0f;
  for (ObjectId o = 0; o < n; ++o) {
    const TokenId v = vocab.visual_token(o);
    w.token_embedding(v, Layout::kVisual) = 1.0f;
    w.token_embedding(v, lay.P(o)) = 1.0f;
    const TokenId t = vocab.object_token(o);
    w.token_embedding(t, lay.I(o)) = 1.0f;
    for (ObjectId j = 0; j <= o; ++j) w.token_embedding(t, lay.D(j)) = 0.25f;
  }

  // layer 1: presence copy (head 0) and question copy (head 1)
  {
    auto& L = w.layers[0];
    const double qs = p.shallow_query;
    wire_score(L, lay.col(0, 0), Layout::kConst, K * u, qs, Layout::kVisual, u, p.presence_score);
    wire_score(L, lay.col(0, 1), Layout::kVisual, u, qs, Layout::kBos, u, p.visual_gate);
    for (ObjectId o = 0; o < n; ++o) {
      L.wv(lay.P(o), lay.col(0, o)) = 1.0f;
      L.wo(lay.col(0, o), lay.P(o)) = F(nvis / u);
    }
    for (ObjectId o = 0; o < n; ++o)
      wire_score(L, lay.col(1, 0), Layout::kQuestion, u, qs, lay.I(o), u, p.copy_score);
    wire_score(L, lay.col(1, 1), Layout::kConst, K * u, qs, Layout::kBos, u, p.copy_sink);
    for (ObjectId o = 0; o < n; ++o) {
      L.wv(lay.I(o), lay.col(1, o)) = 1.0f;
      L.wo(lay.col(1, o), lay.I(o)) = F(1.0 / u);
    }
  }

  // lookup
  {
    auto& L = w.layers[lookup_layer];
    const double qs = p.shallow_query;
    for (ObjectId o = 0; o < n; ++o)
      wire_score(L, lay.col(0, o), lay.I(o), u, qs, lay.P(o), u, p.lookup_match);
    wire_score(L, lay.col(0, n), Layout::kConst, K * u, qs, Layout::kVisual, u, p.lookup_visual);
    wire_score(L, lay.col(0, n + 1), Layout::kConst, K * u, qs, Layout::kBos, u, p.lookup_sink);
    L.wv(Layout::kVisual, lay.col(0, 0)) = 1.0f;
    L.wo(lay.col(0, 0), Layout::kFound) = F(1.0 / u);
  }

  // suppression zone: caption corruption head and detector FFN
  for (std::size_t l = deep_first; l < cfg.num_layers; ++l) {
    auto& L = w.layers[l];
    const double qd = p.deep_query;
    wire_score(L, lay.col(0, 0), Layout::kConst, K * u, qd, Layout::kVisual, u, p.corrupt_visual);
    wire_score(L, lay.col(0, 1), Layout::kConst, K * u, qd, Layout::kBos, u, p.corrupt_sink);
    wire_score(L, lay.col(0, 2), Layout::kVisual, u, qd, Layout::kBos, u, p.visual_gate);
    for (ObjectId a = 0; a < n; ++a) {
      L.wv(lay.P(a), lay.col(0, a)) = 1.0f;
      for (ObjectId b = 0; b < n; ++b)
        if (a != b) L.wo(lay.col(0, a), lay.P(b)) = F(g.caption * corpus.stats.conditional(a, b) / (u * n_deep));
    }
    for (ObjectId q = 0; q < n; ++q) {
      L.w_up(lay.I(q), q) = F(p.ffn_match / u);
      L.w_up(Layout::kQuestion, q) = F(p.ffn_match / u);
      for (ObjectId a = 0; a < n; ++a)
        if (a != q) L.w_up(lay.P(a), q) = F(p.ffn_cooccur * corpus.stats.conditional(a, q) / u);
      L.w_up(Layout::kConst, q) = F(-(2.0 * p.ffn_match + p.ffn_threshold) / (K * u));
      L.w_down(q, Layout::kFound) = F(g.pope / n_deep);
    }
  }

  // noise heads: every head the circuit leaves unused, scaled up with depth
  SplitMix64 rng(noise_seed);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const bool wired = l == 0 || l == lookup_layer || l >= deep_first;
    const std::size_t first_free = l == 0 ? 2 : (wired ? 1 : 0);
    const double sigma = p.noise * (0.5 + static_cast<double>(l + 1) / static_cast<double>(cfg.num_layers));
    auto& L = w.layers[l];
    for (std::size_t h = first_free; h < cfg.num_heads; ++h)
      for (std::size_t r = 0; r < cfg.hidden_dim; ++r)
        for (std::size_t c = 0; c < lay.dk; ++c) {
          L.wq(r, lay.col(h, c)) = F(rng.uniform(-sigma, sigma));
          L.wk(r, lay.col(h, c)) = F(rng.uniform(-sigma, sigma));
        }
  }

  // readout
  auto& U = w.unembedding;
  for (TokenId t = 0; t < cfg.vocab_size; ++t) U(Layout::kConst, t) = F(p.filler_logit / (K * u));
  for (ObjectId o = 0; o < n; ++o) {
    const TokenId t = vocab.object_token(o);
    U(lay.P(o), t) = F(p.object_gain / u);
    U(lay.D(o), t) = F(-p.mask_penalty / (0.25 * u));
    U(Layout::kConst, t) = F(-p.order_slope * (o + 1) / (K * u));
  }
  U(Layout::kConst, Vocabulary::kEos) = F(p.eos_logit / (K * u));
  U(Layout::kFound, Vocabulary::kYes) = F(p.yes_gain / u);
  U(Layout::kQuestion, Vocabulary::kYes) = F(p.question_gate / u);
  U(Layout::kConst, Vocabulary::kYes) = F(-(p.yes_offset + p.question_gate) / (K * u));
  U(Layout::kQuestion, Vocabulary::kNo) = F(p.question_gate / u);
  U(Layout::kConst, Vocabulary::kNo) = F((p.no_logit - p.question_gate) / (K * u));

  validate_weights(cfg, w);
  return m;
}

inline decode::DecodeConfig vanilla_greedy(std::size_t max_tokens) {
  decode::DecodeConfig c;
  c.mode = decode::Mode::vanilla;
  c.strategy = decode::Strategy::greedy;
  c.max_tokens = max_tokens;
  c.keep_logits = false;
  return c;
}

/// CHAIR_S of vanilla greedy captions over `scenes`.
inline double fit_chair_s(const Model& m, const Vocabulary& vocab, const metrics::Lexicon& lex,
                          const std::vector<std::vector<ObjectId>>& scenes) {
  std::vector<metrics::CaptionItem> items;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto res = run_caption(m, vocab, vanilla_greedy(scenes[i].size() + 4), scenes[i]);
    items.push_back({metrics::extract_mentions(vocab.detokenize(res.tokens), lex), {scene_id(i), scenes[i]}, {}});
  }
  return metrics::chair_scores(items).chair_s.value;
}

/// Vanilla yes-rate on absent partners of visible objects.
inline double fit_false_yes(const Model& m, const Vocabulary& vocab, std::size_t num_objects,
                            const std::vector<std::vector<ObjectId>>& scenes) {
  std::size_t asked = 0, yes = 0;
  for (const auto& s : scenes) {
    std::vector<ObjectId> queries;
    for (ObjectId o : s)
      if (auto q = partner_of(o, num_objects); q && !std::binary_search(s.begin(), s.end(), *q)) queries.push_back(*q);
    if (queries.empty()) continue;
    for (const auto& r : answer_questions(m, vocab, vanilla_greedy(1), s, queries)) {
      ++asked;
      yes += r.answer == decode::Answer::yes ? 1 : 0;
    }
  }
  return asked == 0 ? 0.0 : static_cast<double>(yes) / static_cast<double>(asked);
}

/// Smallest gain (doubling, then geometric bisection) whose metric reaches
/// `target`; the best trial when none does.
template <typename Eval>
GainTrial search_gain(const BiasedModelParams& p, double target, Eval&& eval, std::vector<GainTrial>& trials) {
  double lo = 0.0;
  GainTrial best{0.0, -1.0};
  GainTrial hit{0.0, -1.0};
  double g = p.start_gain;
  for (std::size_t k = 0; k <= p.max_doublings; ++k, g *= 2.0) {
    const GainTrial t{g, eval(g)};
    trials.push_back(t);
    if (t.metric > best.metric) best = t;
    if (t.metric >= target) {
      hit = t;
      break;
    }
    lo = g;
  }
  if (hit.metric < 0.0) return best;
  for (std::size_t k = 0; k < p.refine_steps && lo > 0.0; ++k) {
    const double mid = std::sqrt(lo * hit.gain);
    const GainTrial t{mid, eval(mid)};
    trials.push_back(t);
    if (t.metric >= target)
      hit = t;
    else
      lo = mid;
  }
  return hit;
}

}  // namespace detail

/// Mean Tr_Q + Tr_K per zone after prefilling `prompt` without modulation.
inline std::array<double, 3> zone_energy(const Model& m, std::span<const TokenId> prompt) {
  KVCache cache(m.config);
  StepOptions o;
  o.skip_lens = true;
  const auto acts = prefill(m, cache, prompt, nullptr, o);
  const auto zones = spectral::partition_zones(nullptr, m.config.num_layers, spectral::ZonePolicy::thirds);
  const auto profile = acts.profile();
  const auto total = profile.total_energy();
  std::array<double, 3> out{};
  const spectral::LayerRange ranges[3] = {zones.preservation, zones.interaction, zones.suppression};
  for (std::size_t z = 0; z < 3; ++z) {
    double s = 0.0;
    for (std::size_t l = ranges[z].first; l <= ranges[z].last; ++l) s += total[l - 1];
    out[z] = s / static_cast<double>(ranges[z].size());
  }
  return out;
}

/// Builds and calibrates the biased model for `corpus`.
///
/// Fit scenes are drawn from the corpus parameters with their own stream, so
/// they are held out from the corpus scenes. Throws CalibrationError when no
/// caption gain reaches `min_chair_s`.
inline BiasedModel build_biased_model(const Corpus& corpus, const BiasedModelParams& params, std::uint64_t seed) {
  params.validate();
  corpus.params.validate();
  BiasedModel out;
  out.vocab = Vocabulary(corpus.lexicon, params.min_vocab);
  const std::uint64_t noise_seed = sub_seed(seed, 0);
  SplitMix64 fit_rng(sub_seed(seed, 1));
  const auto fit = draw_scene_objects(corpus.params, params.fit_scenes, fit_rng);
  const std::size_t n = corpus.params.lexicon_size;

  auto& rep = out.fit;
  const auto cap = detail::search_gain(
      params, params.target_chair_s,
      [&](double g) {
        const auto m = detail::wire_model(corpus, params, out.vocab, {g, 0.0}, noise_seed);
        return detail::fit_chair_s(m, out.vocab, corpus.lexicon, fit);
      },
      rep.caption_trials);
  if (cap.metric < params.min_chair_s) {
    std::ostringstream msg;
    msg << "biased model calibration failed: best vanilla CHAIR_S " << cap.metric << " < " << params.min_chair_s
        << " on " << fit.size() << " held-out scenes; trials (gain:chair_s)";
    for (const auto& t : rep.caption_trials) msg << ' ' << t.gain << ':' << t.metric;
    throw CalibrationError(msg.str());
  }
  rep.caption_gain = cap.gain;
  rep.fit_chair_s = cap.metric;

  const auto pope = detail::search_gain(
      params, params.target_false_yes,
      [&](double g) {
        const auto m = detail::wire_model(corpus, params, out.vocab, {rep.caption_gain, g}, noise_seed);
        return detail::fit_false_yes(m, out.vocab, n, fit);
      },
      rep.pope_trials);
  rep.pope_gain = pope.gain;
  rep.fit_false_yes = pope.metric;

  out.model = detail::wire_model(corpus, params, out.vocab, {rep.caption_gain, rep.pope_gain}, noise_seed);
  rep.zone_energy = zone_energy(out.model, out.vocab.caption_prompt(fit.front()));
  return out;
}

}  // namespace lisa::harness
