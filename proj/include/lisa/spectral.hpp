// Copyright (C) 2026 The LISA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "lisa/errors.hpp"
#include "lisa/tensor.hpp"

namespace lisa::spectral {

// ---------------------------------------------------------------------------
// Energies and suppression factors
// ---------------------------------------------------------------------------

/// Squared Frobenius norm, sum_ij M_ij^2 (equivalently Tr(M M^T)).
inline double spectral_energy(std::span<const float> entries) {
  if (!all_finite(entries)) throw ValidationError("spectral_energy: non-finite input");
  return sum_squares(entries);
}

inline double spectral_energy(const Matrix& m) { return spectral_energy(m.flat()); }

struct ClampBounds {
  double min = 0.5;
  double max = 2.0;
};

struct Suppression {
  double lambda = 1.0;
  bool clamped = false;
};

/// lambda = clamp(1 + gamma / ln(energy + epsilon)).
///
/// gamma == 0 yields exactly 1. When ln(energy + epsilon) <= 0 the formula
/// changes sign (or diverges), so the lower bound is returned and flagged.
/// Never returns NaN or Inf.
inline Suppression suppression_factor(double energy, double gamma, double epsilon,
                                      ClampBounds bounds = {}) {
  if (gamma == 0.0) return {1.0, false};
  const double log_term = std::log(energy + epsilon);
  if (!(log_term > 0.0)) return {bounds.min, true};
  const double raw = 1.0 + gamma / log_term;
  if (raw < bounds.min) return {bounds.min, true};
  if (raw > bounds.max || !std::isfinite(raw)) return {bounds.max, true};
  return {raw, false};
}

/// Modulated attention logit lambda_q * (q . k) * lambda_k / sqrt(d_k).
/// With both factors equal to 1 this is the standard scaled dot product.
template <typename T>
T modulated_score(std::span<const T> q, std::span<const T> k, T lambda_q, T lambda_k,
                  std::size_t head_dim) {
  T d = T(0);
  for (std::size_t i = 0; i < q.size(); ++i) d += q[i] * k[i];
  return (lambda_q * d * lambda_k) / std::sqrt(static_cast<T>(head_dim));
}

/// s = 1 / (Tr_Q + Tr_K + epsilon).
inline double stability(double tr_q, double tr_k, double epsilon) {
  return 1.0 / (tr_q + tr_k + epsilon);
}

// ---------------------------------------------------------------------------
// Cross-layer fusion
// ---------------------------------------------------------------------------

/// alpha_l = s_l / sum_j s_j.
inline std::vector<double> fusion_weights(std::span<const double> stabilities) {
  if (stabilities.empty()) throw ValidationError("fusion_weights: empty anchor set");
  double total = 0.0;
  for (double s : stabilities) {
    if (!(s > 0.0) || !std::isfinite(s))
      throw ValidationError("fusion_weights: stabilities must be finite and positive");
    total += s;
  }
  std::vector<double> alpha(stabilities.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) alpha[i] = stabilities[i] / total;
  return alpha;
}

/// H = sum_l alpha_l H_l over equally sized hidden rows.
inline std::vector<float> fuse_hidden(std::span<const double> alpha,
                                      std::span<const std::span<const float>> hidden) {
  if (alpha.size() != hidden.size() || hidden.empty())
    throw ValidationError("fuse_hidden: weight count does not match hidden-state count");
  const std::size_t width = hidden.front().size();
  std::vector<double> acc(width, 0.0);
  for (std::size_t a = 0; a < hidden.size(); ++a) {
    if (hidden[a].size() != width) throw ValidationError("fuse_hidden: shape mismatch");
    for (std::size_t i = 0; i < width; ++i) acc[i] += alpha[a] * hidden[a][i];
  }
  return {acc.begin(), acc.end()};
}

// ---------------------------------------------------------------------------
// Zones
// ---------------------------------------------------------------------------

enum class Zone { preservation = 0, interaction = 1, suppression = 2 };

inline const char* to_string(Zone z) {
  switch (z) {
    case Zone::preservation: return "preservation";
    case Zone::interaction: return "interaction";
    case Zone::suppression: return "suppression";
  }
  return "?";
}

/// Inclusive, 1-based layer range.
struct LayerRange {
  std::size_t first = 0;
  std::size_t last = 0;

  std::size_t size() const { return last >= first ? last - first + 1 : 0; }
  bool contains(std::size_t layer) const { return layer >= first && layer <= last; }
  bool operator==(const LayerRange&) const = default;
};

struct ZonePartition {
  LayerRange preservation;
  LayerRange interaction;
  LayerRange suppression;

  std::size_t num_layers() const { return suppression.last; }

  Zone zone_of(std::size_t layer) const {
    if (preservation.contains(layer)) return Zone::preservation;
    if (interaction.contains(layer)) return Zone::interaction;
    return Zone::suppression;
  }

  const LayerRange& range(Zone z) const {
    switch (z) {
      case Zone::preservation: return preservation;
      case Zone::interaction: return interaction;
      default: return suppression;
    }
  }

  /// Disjoint, ordered, contiguous, non-empty and covering [1, L].
  bool valid_for(std::size_t num_layers) const {
    return preservation.first == 1 && preservation.size() > 0 && interaction.size() > 0 &&
           suppression.size() > 0 && interaction.first == preservation.last + 1 &&
           suppression.first == interaction.last + 1 && suppression.last == num_layers;
  }

  bool operator==(const ZonePartition&) const = default;
};

enum class ZonePolicy { thirds, energy };

inline ZonePolicy parse_zone_policy(const std::string& s) {
  if (s == "thirds") return ZonePolicy::thirds;
  if (s == "energy") return ZonePolicy::energy;
  throw ValidationError("unknown zone policy '" + s + "'");
}

inline const char* to_string(ZonePolicy p) { return p == ZonePolicy::thirds ? "thirds" : "energy"; }

/// Per-layer spectral snapshot for one decode step.
struct LayerSpectrum {
  double tr_q = 0.0;
  double tr_k = 0.0;
  double lambda_q = 1.0;
  double lambda_k = 1.0;
  double stability = 0.0;
  bool clamp_q = false;
  bool clamp_k = false;
};

/// Index i holds layer i + 1.
struct SpectralProfile {
  std::vector<LayerSpectrum> layers;

  std::vector<double> total_energy() const {
    std::vector<double> e(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) e[i] = layers[i].tr_q + layers[i].tr_k;
    return e;
  }
};

namespace detail {

inline ZonePartition from_boundaries(std::size_t b1, std::size_t b2, std::size_t num_layers) {
  // b1, b2: number of layers before the interaction / suppression zone.
  return {{1, b1}, {b1 + 1, b2}, {b2 + 1, num_layers}};
}

inline ZonePartition thirds(std::size_t num_layers) {
  // Remainder layers go to the deeper zones, suppression first.
  const std::size_t base = num_layers / 3;
  const std::size_t rem = num_layers % 3;
  const std::size_t pres = base;
  const std::size_t inter = base + (rem >= 2 ? 1 : 0);
  return from_boundaries(pres, pres + inter, num_layers);
}

inline std::vector<double> moving_average3(std::span<const double> v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = std::min(v.size() - 1, i + 1);
    double s = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) s += v[j];
    out[i] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

}  // namespace detail

/// Splits [1, L] into preservation / interaction / suppression.
///
/// `thirds`: contiguous thirds, remainder to the deeper zones (suppression
/// first). `energy`: boundaries at the two largest increases of the 3-point
/// smoothed total energy Tr_Q + Tr_K; ties go to the shallower boundary. Falls
/// back to thirds when the profile has fewer than two positive increases.
inline ZonePartition partition_zones(const SpectralProfile* profile, std::size_t num_layers,
                                     ZonePolicy policy) {
  if (num_layers < 3) throw ValidationError("partition_zones: need at least 3 layers");
  if (policy == ZonePolicy::thirds || profile == nullptr) return detail::thirds(num_layers);
  if (profile->layers.size() != num_layers)
    throw ValidationError("partition_zones: profile length does not match layer count");

  const auto energy = profile->total_energy();
  const auto smooth = detail::moving_average3(energy);
  // increase[k] is the jump between layer k and layer k + 1 (1-based), k in [1, L-1].
  std::vector<std::size_t> cut(num_layers - 1);
  std::iota(cut.begin(), cut.end(), std::size_t{1});
  auto increase = [&](std::size_t k) { return smooth[k] - smooth[k - 1]; };
  std::stable_sort(cut.begin(), cut.end(),
                   [&](std::size_t a, std::size_t b) { return increase(a) > increase(b); });
  if (!(increase(cut[0]) > 0.0) || !(increase(cut[1]) > 0.0)) return detail::thirds(num_layers);
  const std::size_t b1 = std::min(cut[0], cut[1]);
  const std::size_t b2 = std::max(cut[0], cut[1]);
  return detail::from_boundaries(b1, b2, num_layers);
}

// ---------------------------------------------------------------------------
// Modulator
// ---------------------------------------------------------------------------

/// Zone-specific attention modulation. A uniform gamma vector is the flat ablation.
struct SpectralModulator {
  std::array<double, 3> gamma{0.0, 0.0, 1.0};
  double epsilon = 1e-7;
  ClampBounds clamp{};
  ZonePartition zones{};
  /// Energies and factors per head instead of over the concatenated projection.
  bool per_head = false;

  void validate(std::size_t num_layers) const {
    if (!(epsilon > 0.0)) throw ValidationError("epsilon must be positive");
    if (!(clamp.min <= 1.0 && 1.0 <= clamp.max))
      throw ValidationError("clamp bounds must satisfy lambda_min <= 1 <= lambda_max");
    for (double g : gamma)
      if (!(g >= 0.0) || !std::isfinite(g)) throw ValidationError("gamma entries must be >= 0");
    if (!zones.valid_for(num_layers)) throw ValidationError("zone partition does not cover model");
  }

  double gamma_for(std::size_t layer) const {
    return gamma[static_cast<std::size_t>(zones.zone_of(layer))];
  }

  Suppression factor(std::size_t layer, double energy) const {
    return suppression_factor(energy, gamma_for(layer), epsilon, clamp);
  }

  bool is_identity() const { return gamma[0] == 0.0 && gamma[1] == 0.0 && gamma[2] == 0.0; }
};

}  // namespace lisa::spectral
