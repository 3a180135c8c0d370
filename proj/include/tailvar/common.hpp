// Copyright 2026 The tailvar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace tailvar {

/// Simulated time in integer nanoseconds.
using Nanos = std::int64_t;
using ThreadId = std::uint32_t;
using CoreId = std::uint32_t;

inline constexpr Nanos kMicro = 1'000;
inline constexpr Nanos kMilli = 1'000'000;
inline constexpr Nanos kSecond = 1'000'000'000;

// Error hierarchy. Every failure the library reports derives from Error so
// callers can catch one type; the concrete type names the failed contract.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define TAILVAR_DEFINE_ERROR(Name)          \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  }

TAILVAR_DEFINE_ERROR(EmptyInput);
TAILVAR_DEFINE_ERROR(ConfigError);
TAILVAR_DEFINE_ERROR(NestingViolation);
TAILVAR_DEFINE_ERROR(EmptyStackPop);
TAILVAR_DEFINE_ERROR(ContextSwitchInInterrupt);
TAILVAR_DEFINE_ERROR(NestedTaskOnThread);
TAILVAR_DEFINE_ERROR(UnmatchedEnd);
TAILVAR_DEFINE_ERROR(UnknownCounter);
TAILVAR_DEFINE_ERROR(TooFewSamples);
TAILVAR_DEFINE_ERROR(InsufficientData);
TAILVAR_DEFINE_ERROR(ZeroProbability);
TAILVAR_DEFINE_ERROR(InvalidSlots);
TAILVAR_DEFINE_ERROR(MismatchedRun);

#undef TAILVAR_DEFINE_ERROR

/// SplitMix64 finalizer; used both as a hash and to seed generators.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Maps a 64-bit hash to [0, 1) using the top 53 bits.
constexpr double unit_interval(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

/// xoshiro256** with explicit, platform-independent draw helpers.
///
/// The standard distributions are implementation-defined, so every draw the
/// simulator makes goes through the helpers here to keep event streams
/// bit-identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::uint64_t s = seed ^ mix64(stream + 0x632be59bd9b4e019ULL);
    for (auto& word : state_) {
      s = mix64(s);
      word = s;
    }
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  double uniform01() { return unit_interval(next()); }

  /// Uniform integer in [0, bound). Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    __uint128_t m = static_cast<__uint128_t>(next()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<__uint128_t>(next()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Uniform integer in [lo, hi] (inclusive).
  std::int64_t between(std::int64_t lo, std::int64_t hi) {
    if (hi <= lo) return lo;
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  bool chance(double p) { return uniform01() < p; }

  double exponential(double mean) { return -mean * std::log1p(-uniform01()); }

  /// Geometric on {1, 2, ...} with the given mean (>= 1).
  std::uint64_t geometric(double mean) {
    if (mean <= 1.0) return 1;
    const double p = 1.0 / mean;
    const double u = uniform01();
    return 1 + static_cast<std::uint64_t>(std::floor(std::log1p(-u) / std::log1p(-p)));
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t state_[4];
};

}  // namespace tailvar
