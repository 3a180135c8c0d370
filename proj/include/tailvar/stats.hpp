// Copyright 2026 The tailvar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "tailvar/common.hpp"

namespace tailvar {

/// 1-based nearest rank for fraction p of n samples: ceil(p*n), clamped to
/// [1, n]. A small slack absorbs binary representation error so that, e.g.,
/// p=0.07 with n=100 yields rank 7 rather than 8.
inline std::size_t nearest_rank(double p, std::size_t n) {
  const double raw = std::ceil(p * static_cast<double>(n) - 1e-9);
  if (raw < 1.0) return 1;
  const auto rank = static_cast<std::size_t>(raw);
  return std::min(rank, n);
}

/// Nearest-rank percentile on already sorted data.
template <typename T>
T percentile_sorted(std::span<const T> sorted, double p) {
  if (sorted.empty()) throw EmptyInput("percentile of an empty set");
  return sorted[nearest_rank(p, sorted.size()) - 1];
}

/// Nearest-rank percentile: the ceil(p*n)-th smallest element.
template <typename T>
T percentile(std::span<const T> values, double p) {
  if (values.empty()) throw EmptyInput("percentile of an empty set");
  if (!(p > 0.0) || p > 1.0) throw ConfigError("percentile fraction must be in (0, 1]");
  std::vector<T> copy(values.begin(), values.end());
  auto nth = copy.begin() + static_cast<std::ptrdiff_t>(nearest_rank(p, copy.size()) - 1);
  std::nth_element(copy.begin(), nth, copy.end());
  return *nth;
}

template <typename T>
T percentile(const std::vector<T>& values, double p) {
  return percentile(std::span<const T>(values), p);
}

template <typename T>
double mean(std::span<const T> values) {
  if (values.empty()) throw EmptyInput("mean of an empty set");
  long double sum = 0;
  for (const auto& v : values) sum += static_cast<long double>(v);
  return static_cast<double>(sum / static_cast<long double>(values.size()));
}

/// Coefficient of variation with the population standard deviation.
/// Zero when the mean is zero.
template <typename T>
double coefficient_of_variation(std::span<const T> values) {
  const double m = mean(values);
  if (m == 0.0) return 0.0;
  long double ss = 0;
  for (const auto& v : values) {
    const long double d = static_cast<long double>(v) - m;
    ss += d * d;
  }
  const double sd = std::sqrt(static_cast<double>(ss / static_cast<long double>(values.size())));
  return sd / std::abs(m);
}

/// Average ranks (1-based), ties share the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double r = (static_cast<double>(i + j) / 2.0) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = std::min(a.size(), b.size());
  if (n < 2) return 0.0;
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0 || sbb == 0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

/// Spearman rank correlation (tie-corrected via average ranks).
inline double spearman(std::span<const double> a, std::span<const double> b) {
  auto ra = average_ranks(a);
  auto rb = average_ranks(b);
  return pearson(ra, rb);
}

}  // namespace tailvar
