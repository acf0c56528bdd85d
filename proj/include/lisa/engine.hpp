// Copyright (C) 2026 The LISA Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// Minimal pre-norm decoder-only transformer.
///
/// The model has no positional encoding (causal masking alone orders the
/// sequence), RMS norms with gain and bias, GELU feed-forward blocks and an
/// untied output head. Every layer exposes its query/key rows, residual
/// hidden state and logit-lens distribution, and attention scores can be
/// rescaled per layer by a spectral::SpectralModulator.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lisa/errors.hpp"
#include "lisa/spectral.hpp"
#include "lisa/tensor.hpp"

namespace lisa {

using TokenId = std::uint32_t;

struct ModelConfig {
  std::size_t num_layers = 8;
  std::size_t hidden_dim = 64;
  std::size_t num_heads = 4;
  std::size_t vocab_size = 512;
  std::size_t max_seq_len = 1024;
  std::size_t visual_prefix_len = 0;
  std::size_t ffn_dim = 256;
  double norm_eps = 1e-6;

  std::size_t head_dim() const { return num_heads == 0 ? 0 : hidden_dim / num_heads; }

  void validate() const {
    if (num_layers < 3) throw ValidationError("num_layers must be >= 3 (three zones)");
    if (hidden_dim == 0 || num_heads == 0 || ffn_dim == 0 || max_seq_len == 0)
      throw ValidationError("dimensions must be positive");
    if (hidden_dim % num_heads != 0)
      throw ValidationError("hidden_dim " + std::to_string(hidden_dim) +
                            " is not divisible by num_heads " + std::to_string(num_heads));
    if (vocab_size < 2) throw ValidationError("vocab_size must be >= 2");
    if (visual_prefix_len >= max_seq_len)
      throw ValidationError("visual_prefix_len must be smaller than max_seq_len");
    if (!(norm_eps > 0.0)) throw ValidationError("norm_eps must be positive");
  }

  bool operator==(const ModelConfig&) const = default;
};

struct NormParams {
  std::vector<float> gain;
  std::vector<float> bias;

  static NormParams identity(std::size_t dim) { return {std::vector<float>(dim, 1.0f), std::vector<float>(dim, 0.0f)}; }
  bool operator==(const NormParams&) const = default;
};

struct LayerWeights {
  NormParams attn_norm;
  Matrix wq, wk, wv, wo;  // d x d
  NormParams ffn_norm;
  Matrix w_up;    // d x ffn
  Matrix w_down;  // ffn x d

  bool operator==(const LayerWeights&) const = default;
};

struct WeightBundle {
  Matrix token_embedding;  // V x d
  std::vector<LayerWeights> layers;
  NormParams final_norm;
  Matrix unembedding;  // d x V

  bool operator==(const WeightBundle&) const = default;

  /// Visits every tensor in serialization order.
  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    visit(*this, fn);
  }
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    visit(*this, fn);
  }

 private:
  template <typename Self, typename Fn>
  static void visit(Self& self, Fn& fn) {
    fn(self.token_embedding.flat());
    for (auto& layer : self.layers) {
      fn(std::span(layer.attn_norm.gain));
      fn(std::span(layer.attn_norm.bias));
      fn(layer.wq.flat());
      fn(layer.wk.flat());
      fn(layer.wv.flat());
      fn(layer.wo.flat());
      fn(std::span(layer.ffn_norm.gain));
      fn(std::span(layer.ffn_norm.bias));
      fn(layer.w_up.flat());
      fn(layer.w_down.flat());
    }
    fn(std::span(self.final_norm.gain));
    fn(std::span(self.final_norm.bias));
    fn(self.unembedding.flat());
  }
};

/// Zero-initialised weights with identity norms, shaped for `cfg`.
inline WeightBundle zero_weights(const ModelConfig& cfg) {
  const std::size_t d = cfg.hidden_dim;
  WeightBundle w;
  w.token_embedding = Matrix(cfg.vocab_size, d);
  w.layers.resize(cfg.num_layers);
  for (auto& layer : w.layers) {
    layer.attn_norm = NormParams::identity(d);
    layer.wq = Matrix(d, d);
    layer.wk = Matrix(d, d);
    layer.wv = Matrix(d, d);
    layer.wo = Matrix(d, d);
    layer.ffn_norm = NormParams::identity(d);
    layer.w_up = Matrix(d, cfg.ffn_dim);
    layer.w_down = Matrix(cfg.ffn_dim, d);
  }
  w.final_norm = NormParams::identity(d);
  w.unembedding = Matrix(d, cfg.vocab_size);
  return w;
}

/// Checks tensor shapes against the config and that every weight is finite.
inline void validate_weights(const ModelConfig& cfg, const WeightBundle& w) {
  const std::size_t d = cfg.hidden_dim;
  auto shape = [](const Matrix& m, std::size_t r, std::size_t c) { return m.rows() == r && m.cols() == c; };
  auto norm_ok = [d](const NormParams& n) { return n.gain.size() == d && n.bias.size() == d; };
  bool ok = shape(w.token_embedding, cfg.vocab_size, d) && w.layers.size() == cfg.num_layers &&
            norm_ok(w.final_norm) && shape(w.unembedding, d, cfg.vocab_size);
  for (const auto& l : w.layers) {
    ok = ok && norm_ok(l.attn_norm) && norm_ok(l.ffn_norm) && shape(l.wq, d, d) && shape(l.wk, d, d) &&
         shape(l.wv, d, d) && shape(l.wo, d, d) && shape(l.w_up, d, cfg.ffn_dim) &&
         shape(l.w_down, cfg.ffn_dim, d);
  }
  if (!ok) throw ValidationError("weight shapes do not match model config");
  bool finite = true;
  w.for_each_tensor([&](std::span<const float> t) { finite = finite && all_finite(t); });
  if (!finite) throw ValidationError("weights contain non-finite values");
}

struct Model {
  ModelConfig config;
  WeightBundle weights;
};

/// Seeded uniform initialisation.
///
/// One SplitMix64 stream fills the tensors in serialization order. Embeddings
/// draw from U(-1, 1); every projection with fan-in n draws from
/// U(-1/sqrt(n), 1/sqrt(n)). Norm gains are 1 and norm biases 0.
inline Model make_random_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model m{cfg, zero_weights(cfg)};
  SplitMix64 rng(seed);
  auto fill = [&rng](Matrix& t, double bound) {
    for (float& v : t.flat()) v = static_cast<float>(rng.uniform(-bound, bound));
  };
  const double inv_d = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim));
  const double inv_ff = 1.0 / std::sqrt(static_cast<double>(cfg.ffn_dim));
  fill(m.weights.token_embedding, 1.0);
  for (auto& layer : m.weights.layers) {
    fill(layer.wq, inv_d);
    fill(layer.wk, inv_d);
    fill(layer.wv, inv_d);
    fill(layer.wo, inv_d);
    fill(layer.w_up, inv_d);
    fill(layer.w_down, inv_ff);
  }
  fill(m.weights.unembedding, inv_d);
  return m;
}

inline void rms_norm(std::span<const float> x, const NormParams& p, double eps, std::span<float> out) {
  const double ms = sum_squares(x) / static_cast<double>(x.size());
  const float inv = static_cast<float>(1.0 / std::sqrt(ms + eps));
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * inv * p.gain[i] + p.bias[i];
}

/// z = unembed(final_norm(h)). At the last layer this is the model output.
inline std::vector<float> logit_lens(const Model& m, std::span<const float> hidden) {
  if (hidden.size() != m.config.hidden_dim) throw ValidationError("logit_lens: hidden size mismatch");
  std::vector<float> normed(hidden.size());
  rms_norm(hidden, m.weights.final_norm, m.config.norm_eps, normed);
  return matvec(normed, m.weights.unembedding);
}

// ---------------------------------------------------------------------------
// Incremental decoding
// ---------------------------------------------------------------------------

struct LayerCache {
  Matrix keys;    // t x d
  Matrix values;  // t x d
  /// Running squared Frobenius norms of every query / key row seen so far.
  double acc_q = 0.0;
  double acc_k = 0.0;
  std::vector<double> acc_q_head;
  std::vector<double> acc_k_head;
};

struct ModulationStats {
  std::size_t calls = 0;  // layer-steps that went through a modulator
  std::size_t clamp_hits = 0;
};

class KVCache {
 public:
  explicit KVCache(const ModelConfig& cfg) : layers(cfg.num_layers) {
    for (auto& l : layers) {
      l.keys = Matrix(0, cfg.hidden_dim);
      l.values = Matrix(0, cfg.hidden_dim);
      l.acc_q_head.assign(cfg.num_heads, 0.0);
      l.acc_k_head.assign(cfg.num_heads, 0.0);
    }
  }

  std::size_t length() const { return length_; }

  std::vector<LayerCache> layers;
  ModulationStats stats;

 private:
  friend struct ForwardStepImpl;
  std::size_t length_ = 0;
};

struct LayerActivation {
  std::vector<float> query;   // current row, pre-modulation
  std::vector<float> key;     // current row
  std::vector<float> hidden;  // residual stream after the layer
  spectral::LayerSpectrum spectrum;
  std::vector<double> head_lambda_q;
  std::vector<double> head_lambda_k;
  std::vector<float> logits;  // logit lens (empty when not requested)
  std::vector<double> probs;
};

struct LayerActivations {
  std::size_t position = 0;
  std::vector<LayerActivation> layers;

  std::span<const float> final_logits() const { return layers.back().logits; }
  bool has_lens() const { return !layers.empty() && !layers.front().logits.empty(); }

  spectral::SpectralProfile profile() const {
    spectral::SpectralProfile p;
    p.layers.reserve(layers.size());
    for (const auto& l : layers) p.layers.push_back(l.spectrum);
    return p;
  }
};

struct StepOptions {
  /// Logit lens for every layer. The final layer is always computed.
  bool all_layer_lens = true;
  /// Skip all output projections (prefill).
  bool skip_lens = false;
  /// Epsilon used for the per-layer stability score.
  double epsilon = 1e-7;
};

struct ForwardStepImpl {
  static void advance(KVCache& cache) { ++cache.length_; }
};

/// Runs one token through every layer, appending to `cache`.
///
/// With `modulator == nullptr` attention is the plain scaled dot product. With
/// a modulator, scores in layer l are scaled by lambda_q * lambda_k computed
/// from the running query/key energies of that layer (including this step).
inline LayerActivations forward_step(const Model& m, KVCache& cache, TokenId token,
                                     const spectral::SpectralModulator* modulator,
                                     const StepOptions& opts = {}) {
  const ModelConfig& cfg = m.config;
  if (cache.length() >= cfg.max_seq_len)
    throw OverflowError("sequence length " + std::to_string(cache.length() + 1) +
                        " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  if (token >= cfg.vocab_size) throw ValidationError("token id " + std::to_string(token) + " out of range");

  const std::size_t d = cfg.hidden_dim;
  const std::size_t heads = cfg.num_heads;
  const std::size_t dk = cfg.head_dim();

  std::vector<float> x(m.weights.token_embedding.row(token).begin(), m.weights.token_embedding.row(token).end());
  if (!all_finite(x)) throw NumericalError(0, "embedding");

  std::vector<float> xn(d), q(d), k(d), v(d), attn(d), proj(d), up(cfg.ffn_dim), down(d);
  std::vector<float> scores;

  LayerActivations out;
  out.position = cache.length();
  out.layers.resize(cfg.num_layers);

  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const LayerWeights& w = m.weights.layers[l];
    LayerCache& lc = cache.layers[l];
    LayerActivation& act = out.layers[l];

    rms_norm(x, w.attn_norm, cfg.norm_eps, xn);
    matvec(xn, w.wq, q);
    matvec(xn, w.wk, k);
    matvec(xn, w.wv, v);
    lc.keys.append_row(k);
    lc.values.append_row(v);

    lc.acc_q += sum_squares(q);
    lc.acc_k += sum_squares(k);
    for (std::size_t h = 0; h < heads; ++h) {
      lc.acc_q_head[h] += sum_squares(std::span<const float>(q).subspan(h * dk, dk));
      lc.acc_k_head[h] += sum_squares(std::span<const float>(k).subspan(h * dk, dk));
    }

    act.head_lambda_q.assign(heads, 1.0);
    act.head_lambda_k.assign(heads, 1.0);
    act.spectrum.tr_q = lc.acc_q;
    act.spectrum.tr_k = lc.acc_k;
    act.spectrum.stability = spectral::stability(lc.acc_q, lc.acc_k, opts.epsilon);
    if (modulator != nullptr) {
      ++cache.stats.calls;
      if (modulator->per_head) {
        double sq = 0.0, sk = 0.0;
        for (std::size_t h = 0; h < heads; ++h) {
          const auto fq = modulator->factor(l + 1, lc.acc_q_head[h]);
          const auto fk = modulator->factor(l + 1, lc.acc_k_head[h]);
          act.head_lambda_q[h] = fq.lambda;
          act.head_lambda_k[h] = fk.lambda;
          act.spectrum.clamp_q = act.spectrum.clamp_q || fq.clamped;
          act.spectrum.clamp_k = act.spectrum.clamp_k || fk.clamped;
          cache.stats.clamp_hits += (fq.clamped ? 1 : 0) + (fk.clamped ? 1 : 0);
          sq += fq.lambda;
          sk += fk.lambda;
        }
        act.spectrum.lambda_q = sq / static_cast<double>(heads);
        act.spectrum.lambda_k = sk / static_cast<double>(heads);
      } else {
        const auto fq = modulator->factor(l + 1, lc.acc_q);
        const auto fk = modulator->factor(l + 1, lc.acc_k);
        act.head_lambda_q.assign(heads, fq.lambda);
        act.head_lambda_k.assign(heads, fk.lambda);
        act.spectrum.lambda_q = fq.lambda;
        act.spectrum.lambda_k = fk.lambda;
        act.spectrum.clamp_q = fq.clamped;
        act.spectrum.clamp_k = fk.clamped;
        cache.stats.clamp_hits += (fq.clamped ? 1 : 0) + (fk.clamped ? 1 : 0);
      }
    }

    const std::size_t t = lc.keys.rows();
    scores.resize(t);
    for (std::size_t h = 0; h < heads; ++h) {
      const auto qh = std::span<const float>(q).subspan(h * dk, dk);
      const auto lq = static_cast<float>(act.head_lambda_q[h]);
      const auto lk = static_cast<float>(act.head_lambda_k[h]);
      float mx = -INFINITY;
      for (std::size_t j = 0; j < t; ++j) {
        scores[j] = spectral::modulated_score<float>(qh, lc.keys.row(j).subspan(h * dk, dk), lq, lk, dk);
        mx = std::max(mx, scores[j]);
      }
      float total = 0.0f;
      for (std::size_t j = 0; j < t; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        total += scores[j];
      }
      for (std::size_t c = 0; c < dk; ++c) attn[h * dk + c] = 0.0f;
      for (std::size_t j = 0; j < t; ++j) {
        const float p = scores[j] / total;
        const auto vj = lc.values.row(j);
        for (std::size_t c = 0; c < dk; ++c) attn[h * dk + c] += p * vj[h * dk + c];
      }
    }
    matvec(attn, w.wo, proj);
    for (std::size_t i = 0; i < d; ++i) x[i] += proj[i];

    rms_norm(x, w.ffn_norm, cfg.norm_eps, xn);
    matvec(xn, w.w_up, up);
    for (float& u : up) u = gelu(u);
    matvec(up, w.w_down, down);
    for (std::size_t i = 0; i < d; ++i) x[i] += down[i];

    if (!all_finite(x)) throw NumericalError(l + 1, "residual stream");
    act.query = q;
    act.key = k;
    act.hidden = x;
  }

  if (!opts.skip_lens) {
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
      if (!opts.all_layer_lens && l + 1 != cfg.num_layers) continue;
      auto& act = out.layers[l];
      act.logits = logit_lens(m, act.hidden);
      if (!all_finite(act.logits)) throw NumericalError(l + 1, "logit lens");
      act.probs = softmax(act.logits);
    }
  }
  ForwardStepImpl::advance(cache);
  return out;
}

/// Feeds `tokens` one by one; only the last step gets logit-lens outputs.
inline LayerActivations prefill(const Model& m, KVCache& cache, std::span<const TokenId> tokens,
                                const spectral::SpectralModulator* modulator, const StepOptions& opts = {}) {
  if (tokens.empty()) throw ValidationError("prefill: empty prompt");
  StepOptions silent = opts;
  silent.skip_lens = true;
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) forward_step(m, cache, tokens[i], modulator, silent);
  return forward_step(m, cache, tokens.back(), modulator, opts);
}

// ---------------------------------------------------------------------------
// Uncached reference forward
// ---------------------------------------------------------------------------

struct SequenceActivations {
  std::vector<Matrix> queries;  // per layer, T x d
  std::vector<Matrix> keys;     // per layer, T x d
  std::vector<Matrix> hidden;   // per layer, T x d
  Matrix logits;                // T x V, final layer
};

/// Whole-sequence forward pass written in matrix form, without a cache.
///
/// Row i of each layer is modulated with energies of rows [0, i], which is
/// what incremental decoding sees at step i.
inline SequenceActivations forward_sequence(const Model& m, std::span<const TokenId> tokens,
                                            const spectral::SpectralModulator* modulator = nullptr) {
  const ModelConfig& cfg = m.config;
  const std::size_t T = tokens.size();
  const std::size_t d = cfg.hidden_dim, dk = cfg.head_dim(), heads = cfg.num_heads;
  if (T > cfg.max_seq_len) throw OverflowError("sequence longer than max_seq_len");

  auto project = [](const Matrix& in, const Matrix& w) {
    Matrix out(in.rows(), w.cols());
    for (std::size_t r = 0; r < in.rows(); ++r) matvec(in.row(r), w, out.row(r));
    return out;
  };
  auto normalize = [&](const Matrix& in, const NormParams& p) {
    Matrix out(in.rows(), in.cols());
    for (std::size_t r = 0; r < in.rows(); ++r) rms_norm(in.row(r), p, cfg.norm_eps, out.row(r));
    return out;
  };

  Matrix x(T, d);
  for (std::size_t i = 0; i < T; ++i) {
    if (tokens[i] >= cfg.vocab_size) throw ValidationError("token id out of range");
    const auto e = m.weights.token_embedding.row(tokens[i]);
    std::copy(e.begin(), e.end(), x.row(i).begin());
  }

  SequenceActivations out;
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const LayerWeights& w = m.weights.layers[l];
    const Matrix xn = normalize(x, w.attn_norm);
    Matrix Q = project(xn, w.wq), K = project(xn, w.wk), Vv = project(xn, w.wv);

    // lambda per (row, head) from prefix energies
    std::vector<float> lam_q(T * heads, 1.0f), lam_k(T * heads, 1.0f);
    if (modulator != nullptr) {
      std::vector<double> eq(heads + 1, 0.0), ek(heads + 1, 0.0);
      for (std::size_t i = 0; i < T; ++i) {
        eq[heads] += sum_squares(Q.row(i));
        ek[heads] += sum_squares(K.row(i));
        for (std::size_t h = 0; h < heads; ++h) {
          eq[h] += sum_squares(Q.row(i).subspan(h * dk, dk));
          ek[h] += sum_squares(K.row(i).subspan(h * dk, dk));
        }
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t src = modulator->per_head ? h : heads;
          lam_q[i * heads + h] = static_cast<float>(modulator->factor(l + 1, eq[src]).lambda);
          lam_k[i * heads + h] = static_cast<float>(modulator->factor(l + 1, ek[src]).lambda);
        }
      }
    }

    Matrix attn(T, d);
    const float scale = std::sqrt(static_cast<float>(dk));
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < T; ++i) {
        std::vector<double> s(i + 1);
        double mx = -INFINITY;
        for (std::size_t j = 0; j <= i; ++j) {
          double acc = 0.0;
          for (std::size_t c = 0; c < dk; ++c) acc += double(Q(i, h * dk + c)) * double(K(j, h * dk + c));
          s[j] = double(lam_q[i * heads + h]) * acc * double(lam_k[i * heads + h]) / scale;
          mx = std::max(mx, s[j]);
        }
        double total = 0.0;
        for (double& e : s) total += (e = std::exp(e - mx));
        for (std::size_t c = 0; c < dk; ++c) {
          double acc = 0.0;
          for (std::size_t j = 0; j <= i; ++j) acc += s[j] / total * Vv(j, h * dk + c);
          attn(i, h * dk + c) = static_cast<float>(acc);
        }
      }
    }
    const Matrix o = project(attn, w.wo);
    for (std::size_t i = 0; i < x.size(); ++i) x.flat()[i] += o.flat()[i];
    Matrix up = project(normalize(x, w.ffn_norm), w.w_up);
    for (float& u : up.flat()) u = gelu(u);
    const Matrix down = project(up, w.w_down);
    for (std::size_t i = 0; i < x.size(); ++i) x.flat()[i] += down.flat()[i];

    out.queries.push_back(std::move(Q));
    out.keys.push_back(std::move(K));
    out.hidden.push_back(x);
  }
  out.logits = Matrix(T, cfg.vocab_size);
  for (std::size_t i = 0; i < T; ++i) {
    const auto z = logit_lens(m, x.row(i));
    std::copy(z.begin(), z.end(), out.logits.row(i).begin());
  }
  return out;
}

}  // namespace lisa
