// Copyright (C) 2026 The LISA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace lisa {

/// Dense row-major float matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<float> flat() { return data_; }
  std::span<const float> flat() const { return data_; }

  void append_row(std::span<const float> values) {
    assert(values.size() == cols_);
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

/// SplitMix64. Fully specified, so streams are identical on every platform.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) from the top 53 bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling avoids modulo bias.
  std::uint64_t below(std::uint64_t n) {
    assert(n > 0);
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % n;
  }

 private:
  std::uint64_t state_;
};

/// Derives an independent child seed from a master seed and a stream label.
inline std::uint64_t sub_seed(std::uint64_t master, std::uint64_t stream) {
  SplitMix64 mix(master ^ (stream * 0xD1B54A32D192ED03ull));
  mix.next();
  return mix.next();
}

/// y = x * W, where W is (x.size() x y.size()).
inline void matvec(std::span<const float> x, const Matrix& w, std::span<float> y) {
  assert(x.size() == w.rows() && y.size() == w.cols());
  std::fill(y.begin(), y.end(), 0.0f);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float xi = x[i];
    if (xi == 0.0f) continue;
    const auto wr = w.row(i);
    for (std::size_t j = 0; j < y.size(); ++j) y[j] += xi * wr[j];
  }
}

inline std::vector<float> matvec(std::span<const float> x, const Matrix& w) {
  std::vector<float> y(w.cols());
  matvec(x, w, y);
  return y;
}

inline float dot(std::span<const float> a, std::span<const float> b) {
  assert(a.size() == b.size());
  float s = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Sum of squares, accumulated in double.
inline double sum_squares(std::span<const float> a) {
  double s = 0.0;
  for (float v : a) s += static_cast<double>(v) * static_cast<double>(v);
  return s;
}

inline bool all_finite(std::span<const float> a) {
  return std::all_of(a.begin(), a.end(), [](float v) { return std::isfinite(v); });
}

/// Numerically stable softmax computed in double precision.
inline std::vector<double> softmax(std::span<const float> logits, double temperature = 1.0) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((static_cast<double>(logits[i]) - mx) / temperature);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

inline std::vector<double> log_softmax(std::span<const float> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (float z : logits) total += std::exp(static_cast<double>(z) - mx);
  const double lse = mx + std::log(total);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<double>(logits[i]) - lse;
  return out;
}

/// First index of the maximum; ties go to the lowest index.
inline std::size_t argmax(std::span<const float> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline float gelu(float x) {
  constexpr float k = 0.7978845608028654f;  // sqrt(2/pi)
  return 0.5f * x * (1.0f + std::tanh(k * (x + 0.044715f * x * x * x)));
}

}  // namespace lisa
