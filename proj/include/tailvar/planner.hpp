// Copyright 2026 The tailvar Authors
// SPDX-License-Identifier: Apache-2.0

// How long to record before a rare cause has been seen often enough.
//
// A task reveals a cause only if it is in the tail, was selected for
// recording, and ran in an epoch where the cause's counter was enabled;
// the expected number of tasks per observation is the reciprocal of the
// product of those probabilities. All arithmetic is exact.

#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>

#include "tailvar/common.hpp"

namespace tailvar {

/// Exact fraction num/den in lowest terms, den > 0.
class Rational {
 public:
  __extension__ using Int = __int128;

  Rational() = default;
  Rational(std::int64_t v) : num_(v), den_(1) {}  // NOLINT: implicit by design
  Rational(Int num, Int den) : num_(num), den_(den) {
    if (den_ == 0) throw ConfigError("rational with zero denominator");
    normalize();
  }

  /// Parses "a/b" or a plain decimal such as "0.05" exactly.
  static Rational parse(std::string_view text) {
    const auto slash = text.find('/');
    if (slash != std::string_view::npos) {
      const Rational n = parse(text.substr(0, slash));
      const Rational d = parse(text.substr(slash + 1));
      if (d.num_ == 0) throw ConfigError("zero denominator in '" + std::string(text) + "'");
      return n / d;
    }
    if (text.empty()) throw ConfigError("empty number");
    Int num = 0, den = 1;
    bool neg = false, frac = false, digits = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
      const char c = text[i];
      if (c == '-' && i == 0) {
        neg = true;
      } else if (c == '.' && !frac) {
        frac = true;
      } else if (c >= '0' && c <= '9') {
        if (num > std::numeric_limits<std::int64_t>::max() / 10 || den > std::numeric_limits<std::int64_t>::max() / 10)
          throw ConfigError("number has too many digits: " + std::string(text));
        num = num * 10 + (c - '0');
        if (frac) den *= 10;
        digits = true;
      } else {
        throw ConfigError("not a number: '" + std::string(text) + "'");
      }
    }
    if (!digits) throw ConfigError("not a number: '" + std::string(text) + "'");
    return Rational(neg ? -num : num, den);
  }

  /// The exact value of the shortest decimal that round-trips `v`, so 0.05
  /// becomes 1/20 rather than the binary neighbour of 0.05.
  static Rational from_double(double v) {
    if (!std::isfinite(v)) throw ConfigError("non-finite probability");
    char buf[512];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed);
    if (res.ec != std::errc()) throw ConfigError("cannot represent probability exactly");
    return parse(std::string_view(buf, static_cast<std::size_t>(res.ptr - buf)));
  }

  Int num() const { return num_; }
  Int den() const { return den_; }

  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }

  /// Smallest integer >= this value.
  Int ceil() const {
    Int q = num_ / den_;
    if (num_ % den_ != 0 && num_ > 0) ++q;
    return q;
  }

  friend Rational operator*(const Rational& a, const Rational& b) {
    const Int g1 = gcd(a.num_, b.den_), g2 = gcd(b.num_, a.den_);
    return Rational((a.num_ / g1) * (b.num_ / g2), (a.den_ / g2) * (b.den_ / g1));
  }
  friend Rational operator/(const Rational& a, const Rational& b) {
    if (b.num_ == 0) throw ZeroProbability("division by zero");
    return a * Rational(b.den_, b.num_);
  }
  friend bool operator==(const Rational& a, const Rational& b) {
    return a.num_ == b.num_ && a.den_ == b.den_;
  }
  friend bool operator<(const Rational& a, const Rational& b) { return a.num_ * b.den_ < b.num_ * a.den_; }
  friend bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }
  friend bool operator>(const Rational& a, const Rational& b) { return b < a; }

  std::string str() const {
    return den_ == 1 ? to_string(num_) : to_string(num_) + "/" + to_string(den_);
  }

  static std::string to_string(Int v) {
    if (v == 0) return "0";
    const bool neg = v < 0;
    std::string s;
    while (v != 0) {
      const int d = static_cast<int>(v % 10);
      s.insert(s.begin(), static_cast<char>('0' + (neg ? -d : d)));
      v /= 10;
    }
    return neg ? "-" + s : s;
  }

 private:
  static Int gcd(Int a, Int b) {
    if (a < 0) a = -a;
    if (b < 0) b = -b;
    while (b != 0) {
      const Int t = a % b;
      a = b;
      b = t;
    }
    return a == 0 ? 1 : a;
  }
  void normalize() {
    if (den_ < 0) {
      num_ = -num_;
      den_ = -den_;
    }
    const Int g = gcd(num_, den_);
    num_ /= g;
    den_ /= g;
  }

  Int num_ = 0;
  Int den_ = 1;
};

/// C(n, 2) as an exact integer.
inline std::int64_t choose2(std::int64_t n) { return n * (n - 1) / 2; }

struct PairPenalty {
  Rational p_pair;
  Rational ratio;  // p_event / p_pair
};

/// Probability that a given pair of configurable counters shares an epoch
/// when k of M are enabled, and how much rarer that is than one counter.
inline PairPenalty pair_penalty(std::int64_t m, std::int64_t k) {
  if (k < 2 || k > m) throw InvalidSlots("pair penalty needs 2 <= k <= M (k=" + std::to_string(k) +
                                         ", M=" + std::to_string(m) + ")");
  PairPenalty out;
  out.p_pair = Rational(choose2(k), choose2(m));
  out.ratio = Rational(k, m) / out.p_pair;
  return out;
}

struct Budget {
  Rational p_tail{1};
  Rational p_req{1};
  Rational p_event{1};
  std::int64_t target_occurrences = 1;
  std::optional<double> throughput;  // tasks per second

  /// Coverage of one configurable counter when k of M fit in an epoch.
  static Rational event_coverage(std::int64_t m, std::int64_t k) {
    if (k < 1 || k > m) throw InvalidSlots("coverage needs 1 <= k <= M");
    return Rational(k, m);
  }

  void validate() const {
    for (const auto* p : {&p_tail, &p_req, &p_event}) {
      if (p->num() <= 0) throw ZeroProbability("probabilities must be > 0");
      if (Rational(1) < *p) throw ConfigError("probabilities must be <= 1");
    }
    if (target_occurrences < 1) throw ConfigError("target_occurrences must be >= 1");
    if (throughput && !(*throughput > 0)) throw ConfigError("throughput must be > 0");
  }
};

struct RequestEstimate {
  Rational::Int requests = 0;
  std::optional<double> seconds;
};

/// ceil(target / (p_tail * p_req * p_event)), plus wall-clock time when a
/// throughput is given.
inline RequestEstimate requests_to_observe(const Budget& b) {
  b.validate();
  const Rational per = b.p_tail * b.p_req * b.p_event;
  RequestEstimate out;
  out.requests = (Rational(b.target_occurrences) / per).ceil();
  if (b.throughput) out.seconds = static_cast<double>(out.requests) / *b.throughput;
  return out;
}

/// The same estimate when a cause needs two configurable counters observed
/// together, so p_event is replaced by the pair coverage.
inline RequestEstimate requests_to_observe_pair(Budget b, std::int64_t m, std::int64_t k) {
  b.p_event = pair_penalty(m, k).p_pair;
  return requests_to_observe(b);
}

}  // namespace tailvar
