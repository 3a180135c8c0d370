// Copyright 2026 The tailvar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <limits>

namespace tailvar {

/// Sufficient statistics for simple least squares y = intercept + slope*x.
///
/// Two summaries merge in O(1) and the merge is exact on the stored sums, so
/// regressions over unions of ranges never revisit the points.
struct RegressionSummary {
  double n = 0;
  double sx = 0;
  double sy = 0;
  double sxx = 0;
  double sxy = 0;
  double syy = 0;

  void add(double x, double y) {
    n += 1;
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }

  RegressionSummary& merge(const RegressionSummary& o) {
    n += o.n;
    sx += o.sx;
    sy += o.sy;
    sxx += o.sxx;
    sxy += o.sxy;
    syy += o.syy;
    return *this;
  }

  friend RegressionSummary merged(RegressionSummary a, const RegressionSummary& b) {
    return a.merge(b);
  }

  double centered_xx() const { return n > 0 ? sxx - sx * sx / n : 0.0; }
  double centered_xy() const { return n > 0 ? sxy - sx * sy / n : 0.0; }
  double centered_yy() const { return n > 0 ? syy - sy * sy / n : 0.0; }

  /// Zero when x has no spread (a vertical or single-point fit).
  double slope() const {
    const double cxx = centered_xx();
    return cxx > 0 ? centered_xy() / cxx : 0.0;
  }

  double intercept() const { return n > 0 ? (sy - slope() * sx) / n : 0.0; }

  /// Residual sum of squares of an arbitrary line over this summary's points.
  double sse(double a, double b) const {
    const double v = syy - 2 * a * sy - 2 * b * sxy + n * a * a + 2 * a * b * sx + b * b * sxx;
    return v > 0 ? v : 0.0;
  }

  /// Coefficient of determination of the least-squares fit. A set with no
  /// y-variance is fitted perfectly by a flat line and scores 1.
  double r_squared() const {
    const double cyy = centered_yy();
    if (n < 2 || cyy <= 0) return 1.0;
    const double cxx = centered_xx();
    if (cxx <= 0) return 0.0;
    const double cxy = centered_xy();
    const double r2 = (cxy * cxy) / (cxx * cyy);
    return r2 > 1.0 ? 1.0 : r2;
  }
};

}  // namespace tailvar
