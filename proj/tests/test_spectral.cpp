// Copyright (C) 2026 The LISA Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lisa/spectral.hpp"

namespace {

using namespace lisa;
using namespace lisa::spectral;

// Tr(M M^T) through an explicit Gram product.
double gram_trace(const Matrix& m) {
  double tr = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double g = 0.0;
    for (std::size_t k = 0; k < m.cols(); ++k) g += double(m(i, k)) * double(m(i, k));
    tr += g;
  }
  return tr;
}

TEST(SpectralEnergy, IdentityAndZero) {
  Matrix eye(2, 2);
  eye(0, 0) = eye(1, 1) = 1.0f;
  EXPECT_EQ(spectral_energy(eye), 2.0);
  EXPECT_EQ(spectral_energy(Matrix(3, 5)), 0.0);
}

TEST(SpectralEnergy, MatchesElementwiseAndGramOracles) {
  SplitMix64 rng(11);
  Matrix m(3, 4);
  for (float& v : m.flat()) v = static_cast<float>(rng.uniform(-3, 3));
  double oracle = 0.0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) oracle += std::pow(double(m(i, j)), 2);
  EXPECT_NEAR(spectral_energy(m), oracle, 1e-9 * oracle);
  EXPECT_NEAR(spectral_energy(m), gram_trace(m), 1e-9 * oracle);
}

TEST(SpectralEnergy, RejectsNonFinite) {
  Matrix m(1, 2);
  m(0, 1) = NAN;
  EXPECT_THROW(spectral_energy(m), ValidationError);
}

TEST(SuppressionFactor, GammaZeroIsExactlyOne) {
  for (double tr : {0.0, 1e-9, 0.5, 1.0, 2.718, 1e3, 1e12}) {
    const auto s = suppression_factor(tr, 0.0, 1e-7);
    EXPECT_EQ(s.lambda, 1.0);
    EXPECT_FALSE(s.clamped);
  }
}

TEST(SuppressionFactor, DirectEvaluation) {
  // Tr + eps = e^2 gives 1 + 1/2.
  const double eps = 1e-7;
  const auto s = suppression_factor(std::exp(2.0) - eps, 1.0, eps);
  EXPECT_NEAR(s.lambda, 1.5, 1e-12);
  EXPECT_FALSE(s.clamped);
}

TEST(SuppressionFactor, NegativeLogClampsToLowerBound) {
  const auto s = suppression_factor(0.0, 1.0, 1e-7, {0.5, 2.0});
  EXPECT_EQ(s.lambda, 0.5);
  EXPECT_TRUE(s.clamped);
}

TEST(SuppressionFactor, NearZeroLogClampsToUpperBound) {
  const auto s = suppression_factor(1e-13, 1.0, 1.0, {0.5, 2.0});
  EXPECT_EQ(s.lambda, 2.0);
  EXPECT_TRUE(s.clamped);
  EXPECT_TRUE(std::isfinite(suppression_factor(0.0, 1.0, 1.0).lambda));
}

TEST(SuppressionFactor, TendsToOneForHugeEnergy) {
  const auto s = suppression_factor(1e12, 1.0, 1e-7);
  EXPECT_GT(s.lambda, 1.0);
  EXPECT_LT(s.lambda - 1.0, 0.04);
}

TEST(SuppressionFactor, MonotoneNonIncreasingAboveOne) {
  SplitMix64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double eps = 1e-7;
    const double gamma = rng.uniform(0.01, 3.0);
    const double a = 1.0 + rng.uniform(1e-3, 1e6);
    const double b = 1.0 + rng.uniform(1e-3, 1e6);
    const auto la = suppression_factor(std::min(a, b), gamma, eps, {0.0, 1e300}).lambda;
    const auto lb = suppression_factor(std::max(a, b), gamma, eps, {0.0, 1e300}).lambda;
    ASSERT_GE(la, lb);
    ASSERT_GT(lb, 1.0);
  }
}

TEST(ModulatedScore, Examples) {
  const std::vector<double> q{1, 1, 1, 1}, k{1, 1, 1, 1};  // q.k = 4
  EXPECT_DOUBLE_EQ(modulated_score<double>(q, k, 1.0, 1.0, 4), 2.0);
  EXPECT_NEAR(modulated_score<double>(q, k, 1.5, 1.5, 4), 4.5, 1e-12);
  const std::vector<double> z{1, -1, 0, 0}, w{1, 1, 0, 0};
  EXPECT_EQ(modulated_score<double>(z, w, 0.5, 1.0, 4), 0.0);
}

TEST(Stability, Examples) {
  EXPECT_NEAR(stability(3.0, 1.0, 1e-7), 0.25, 1e-7);
  EXPECT_NEAR(stability(0.0, 0.0, 1e-7), 1e7, 1e-2);
}

TEST(Stability, ReciprocalIdentityAndMonotonicity) {
  SplitMix64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double tq = rng.uniform(0, 1e4), tk = rng.uniform(0, 1e4), eps = 1e-7;
    const double s = stability(tq, tk, eps);
    ASSERT_NEAR(s * (tq + tk + eps), 1.0, 1e-12);
    ASSERT_GT(s, 0.0);
    // doubling both energies halves s once epsilon is halved as well
    const double doubled = stability(2 * tq, 2 * tk, eps);
    ASSERT_LE(doubled, s);
    ASSERT_NEAR(doubled, stability(tq, tk, eps / 2) / 2, 1e-12 * doubled);
    ASSERT_LT(stability(tq + 1.0, tk, eps), s);
  }
}

TEST(FusionWeights, Examples) {
  const std::vector<double> s{1, 1, 2};
  const auto a = fusion_weights(s);
  EXPECT_NEAR(a[0], 0.25, 1e-12);
  EXPECT_NEAR(a[1], 0.25, 1e-12);
  EXPECT_NEAR(a[2], 0.5, 1e-12);
  const auto u = fusion_weights(std::vector<double>(7, 3.3));
  for (double v : u) EXPECT_NEAR(v, 1.0 / 7, 1e-12);
  EXPECT_EQ(fusion_weights(std::vector<double>{0.2}), std::vector<double>{1.0});
  EXPECT_THROW(fusion_weights(std::vector<double>{}), ValidationError);
  EXPECT_THROW(fusion_weights(std::vector<double>{1.0, 0.0}), ValidationError);
}

TEST(FusionWeights, NormalizedAndScaleInvariant) {
  SplitMix64 rng(8);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> s(1 + rng.below(10));
    for (double& v : s) v = std::exp(rng.uniform(-20, 20));
    const auto a = fusion_weights(s);
    ASSERT_LE(std::abs(std::accumulate(a.begin(), a.end(), 0.0) - 1.0), 1e-9);
    const double c = std::exp(rng.uniform(-10, 10));
    std::vector<double> scaled(s);
    for (double& v : scaled) v *= c;
    const auto b = fusion_weights(scaled);
    for (std::size_t j = 0; j < a.size(); ++j) ASSERT_NEAR(a[j], b[j], 1e-12);
  }
}

TEST(FuseHidden, Examples) {
  const std::vector<float> h{1.5f, -2.0f};
  std::vector<std::span<const float>> same{h, h, h};
  const std::vector<double> a{0.25, 0.25, 0.5};
  const auto f = fuse_hidden(a, same);
  EXPECT_NEAR(f[0], 1.5, 1e-6);
  EXPECT_NEAR(f[1], -2.0, 1e-6);

  const std::vector<float> h0{0}, h1{4}, h2{2};
  std::vector<std::span<const float>> rows{h0, h1, h2};
  EXPECT_NEAR(fuse_hidden(a, rows)[0], 2.0, 1e-7);
  EXPECT_EQ(fuse_hidden(std::vector<double>{0, 1, 0}, rows)[0], 4.0f);

  const std::vector<float> bad{1, 2};
  std::vector<std::span<const float>> mismatched{h0, bad};
  EXPECT_THROW(fuse_hidden(std::vector<double>{0.5, 0.5}, mismatched), ValidationError);
}

TEST(FuseHidden, ConvexAndPermutationInvariant) {
  SplitMix64 rng(21);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 1 + rng.below(5), d = 1 + rng.below(6);
    std::vector<std::vector<float>> h(n, std::vector<float>(d));
    std::vector<double> s(n);
    for (auto& row : h)
      for (float& v : row) v = static_cast<float>(rng.uniform(-5, 5));
    for (double& v : s) v = rng.uniform(0.01, 10);
    const auto a = fusion_weights(s);
    std::vector<std::span<const float>> spans(h.begin(), h.end());
    const auto f = fuse_hidden(a, spans);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t j = n; j > 1; --j) std::swap(perm[j - 1], perm[rng.below(j)]);
    std::vector<double> pa(n);
    std::vector<std::span<const float>> ps(n);
    for (std::size_t j = 0; j < n; ++j) {
      pa[j] = a[perm[j]];
      ps[j] = spans[perm[j]];
    }
    const auto g = fuse_hidden(pa, ps);
    for (std::size_t c = 0; c < d; ++c) {
      float lo = h[0][c], hi = h[0][c];
      for (const auto& row : h) {
        lo = std::min(lo, row[c]);
        hi = std::max(hi, row[c]);
      }
      ASSERT_GE(f[c], lo - 1e-5f);
      ASSERT_LE(f[c], hi + 1e-5f);
      ASSERT_NEAR(f[c], g[c], 1e-5);
    }
  }
}

TEST(PartitionZones, ThirdsPolicy) {
  const auto z9 = partition_zones(nullptr, 9, ZonePolicy::thirds);
  EXPECT_EQ(z9.preservation, (LayerRange{1, 3}));
  EXPECT_EQ(z9.interaction, (LayerRange{4, 6}));
  EXPECT_EQ(z9.suppression, (LayerRange{7, 9}));
  const auto z8 = partition_zones(nullptr, 8, ZonePolicy::thirds);
  EXPECT_EQ(z8.preservation, (LayerRange{1, 2}));
  EXPECT_EQ(z8.interaction, (LayerRange{3, 5}));
  EXPECT_EQ(z8.suppression, (LayerRange{6, 8}));
  const auto z10 = partition_zones(nullptr, 10, ZonePolicy::thirds);
  EXPECT_EQ(z10.suppression, (LayerRange{7, 10}));
  EXPECT_THROW(partition_zones(nullptr, 2, ZonePolicy::thirds), ValidationError);
}

SpectralProfile profile_from(const std::vector<double>& energy) {
  SpectralProfile p;
  for (double e : energy) p.layers.push_back({e / 2, e / 2, 1, 1, 0, false, false});
  return p;
}

TEST(PartitionZones, EnergyPolicyPutsDeepSpikeInSuppression) {
  // ramp with a plateau-forming spike starting at layer 6
  const auto p = profile_from({1, 2, 3, 4, 5, 40, 41, 42});
  const auto z = partition_zones(&p, 8, ZonePolicy::energy);
  EXPECT_TRUE(z.valid_for(8));
  EXPECT_TRUE(z.suppression.contains(6));
  EXPECT_EQ(z.zone_of(8), Zone::suppression);

  const auto last = profile_from({1, 2, 3, 4, 5, 6, 7, 50});
  const auto zl = partition_zones(&last, 8, ZonePolicy::energy);
  EXPECT_TRUE(zl.suppression.contains(8));
}

TEST(PartitionZones, EnergyPolicyFallsBackOnFlatProfile) {
  const auto p = profile_from(std::vector<double>(8, 3.0));
  EXPECT_EQ(partition_zones(&p, 8, ZonePolicy::energy), partition_zones(nullptr, 8, ZonePolicy::thirds));
}

TEST(PartitionZones, AlwaysAValidCover) {
  SplitMix64 rng(77);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t L = 3 + rng.below(30);
    std::vector<double> e(L);
    for (double& v : e) v = rng.uniform(0, 100);
    const auto p = profile_from(e);
    for (auto policy : {ZonePolicy::thirds, ZonePolicy::energy}) {
      const auto z = partition_zones(&p, L, policy);
      ASSERT_TRUE(z.valid_for(L)) << "L=" << L;
      for (std::size_t l = 1; l <= L; ++l) {
        const int hits = z.preservation.contains(l) + z.interaction.contains(l) + z.suppression.contains(l);
        ASSERT_EQ(hits, 1);
      }
    }
  }
}

TEST(Modulator, ZoneSpecificGamma) {
  SpectralModulator mod;
  mod.gamma = {0.0, 0.5, 1.0};
  mod.zones = partition_zones(nullptr, 8, ZonePolicy::thirds);
  mod.validate(8);
  EXPECT_EQ(mod.gamma_for(1), 0.0);
  EXPECT_EQ(mod.gamma_for(4), 0.5);
  EXPECT_EQ(mod.gamma_for(8), 1.0);
  EXPECT_EQ(mod.factor(2, 1e4).lambda, 1.0);
  EXPECT_GT(mod.factor(7, 1e4).lambda, 1.0);

  SpectralModulator bad = mod;
  bad.epsilon = 0.0;
  EXPECT_THROW(bad.validate(8), ValidationError);
  bad = mod;
  bad.clamp = {1.2, 2.0};
  EXPECT_THROW(bad.validate(8), ValidationError);
  EXPECT_THROW(mod.validate(9), ValidationError);
}

}  // namespace
