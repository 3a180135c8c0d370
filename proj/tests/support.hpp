// Copyright 2026 The tailvar Authors
// SPDX-License-Identifier: Apache-2.0

// Independent reference implementations and generators for the tests.
// Nothing here calls into the library code it is used to check.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tailvar/common.hpp"
#include "tailvar/sim/machine.hpp"
#include "tailvar/trace_model.hpp"

namespace tailvar::testing {

/// Smallest k in [1, n] with k >= p*n (up to float slack); the k-th smallest.
inline double naive_percentile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double target = p * static_cast<double>(v.size());
  std::size_t k = 1;
  while (k < v.size() && static_cast<double>(k) < target - 1e-9) ++k;
  return v[k - 1];
}

/// The impact value by direct set manipulation. `p_threshold` selects the value
/// cut; tasks strictly above it form the high set.
inline double brute_force_impact(const std::vector<TaskRecord>& records, const std::string& event,
                                 double p_threshold, double p_target) {
  std::vector<double> values;
  std::multiset<double> t_e;
  for (const auto& r : records) {
    auto it = r.values.find(event);
    if (it == r.values.end()) continue;
    values.push_back(static_cast<double>(it->second));
    t_e.insert(static_cast<double>(r.latency()));
  }
  if (values.empty()) return 0;
  const double cut = naive_percentile(values, p_threshold);
  std::set<std::string> high;
  for (const auto& r : records) {
    auto it = r.values.find(event);
    if (it != r.values.end() && static_cast<double>(it->second) > cut) high.insert(r.task_id);
  }
  if (high.empty()) return 0;
  std::multiset<double> rest = t_e;
  for (const auto& r : records)
    if (high.count(r.task_id)) rest.erase(rest.find(static_cast<double>(r.latency())));
  if (rest.empty()) return 0;
  const double var_all = naive_percentile({t_e.begin(), t_e.end()}, p_target);
  if (var_all == 0) return 0;
  const double var_rest = naive_percentile({rest.begin(), rest.end()}, p_target);
  return (var_all - var_rest) / var_all;
}

struct NaiveFit {
  double slope = 0;
  double intercept = 0;
  double r2 = 0;
};

/// Two-pass least squares with centred sums.
inline NaiveFit naive_regression(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  NaiveFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (f.intercept + f.slope * x[i]);
    sse += e * e;
  }
  f.r2 = 1 - sse / syy;
  return f;
}

/// Replays Start/End events with a per-core counter of open frames and a
/// stack of instance ids. Returns an empty string for a valid stream.
inline std::string nesting_problem(const std::vector<sim::MachineEvent>& events) {
  std::map<CoreId, std::vector<std::uint64_t>> open;
  std::map<CoreId, Nanos> last_ts;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (last_ts.count(e.core) && e.ts < last_ts[e.core]) return "time goes backwards at " + std::to_string(i);
    last_ts[e.core] = e.ts;
    auto& st = open[e.core];
    if (sim::is_frame_start(e.type)) st.push_back(e.id);
    if (sim::is_frame_end(e.type)) {
      if (st.empty()) return "end without start at " + std::to_string(i);
      if (st.back() != e.id) return "non-LIFO end at " + std::to_string(i);
      st.pop_back();
    }
    const bool switch_like = e.type == sim::EventType::SchedIn || e.type == sim::EventType::SchedOut ||
                             e.type == sim::EventType::TaskBegin || e.type == sim::EventType::TaskEnd;
    if (switch_like && !st.empty()) return "context change inside a frame at " + std::to_string(i);
  }
  for (const auto& [c, st] : open)
    if (!st.empty()) return "core " + std::to_string(c) + " ends with open frames";
  return {};
}

/// Maximum nesting depth reached on any core.
inline std::size_t max_depth(const std::vector<sim::MachineEvent>& events) {
  std::map<CoreId, std::size_t> depth;
  std::size_t best = 0;
  for (const auto& e : events) {
    if (sim::is_frame_start(e.type)) best = std::max(best, ++depth[e.core]);
    if (sim::is_frame_end(e.type)) --depth[e.core];
  }
  return best;
}

/// A random record with a sparse subset of `events`.
inline TaskRecord random_record(Rng& rng, std::size_t index, const std::vector<std::string>& events,
                                double keep = 0.6) {
  TaskRecord r;
  r.task_id = "t" + std::to_string(index);
  r.begin_ts = rng.between(0, 1'000'000);
  r.end_ts = r.begin_ts + rng.between(0, 500'000);
  for (const auto& e : events)
    if (rng.chance(keep)) r.values[e] = rng.chance(0.1) ? rng.between(0, 1'000'000'000) : rng.between(0, 50);
  return r;
}

/// A catalog of kernel events plus named counters in the given groups.
inline EventCatalog make_catalog(const std::vector<std::pair<std::string, EventGroup>>& counters,
                                 std::size_t configurable_slots = 4) {
  EventCatalog c;
  c.set_slots(0, configurable_slots);
  for (const auto& k : EventCatalog::standard_kernel_events()) c.add(k);
  for (const auto& [name, group] : counters) c.add({name, EventKind::CpuCounter, group, false, true});
  return c;
}

inline bool near_rel(double a, double b, double rel) {
  const double scale = std::max({1.0, std::abs(a), std::abs(b)});
  return std::abs(a - b) <= rel * scale;
}

}  // namespace tailvar::testing
