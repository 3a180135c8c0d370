// Copyright 2026 The tailvar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tailvar/stats.hpp"
#include "tailvar/trace_model.hpp"

namespace tailvar {

struct SegmentStats {
  std::size_t segment_index = 0;
  std::size_t task_count = 0;
  Nanos begin_ts = 0;  // earliest task begin in the segment
  Nanos end_ts = 0;    // latest task end
  Nanos p50 = 0;
  Nanos p90 = 0;
  Nanos p99 = 0;
  std::vector<std::pair<double, Nanos>> extra;  // caller-requested percentiles
  double cov = 0;
};

inline SegmentStats segment_stats(std::span<const TaskRecord> records, std::size_t index,
                                  const std::vector<double>& extra_percentiles = {}) {
  if (records.empty()) throw EmptyInput("segment " + std::to_string(index) + " has no tasks");
  std::vector<Nanos> lat;
  lat.reserve(records.size());
  SegmentStats s;
  s.segment_index = index;
  s.task_count = records.size();
  s.begin_ts = records.front().begin_ts;
  s.end_ts = records.front().end_ts;
  for (const auto& r : records) {
    lat.push_back(r.latency());
    s.begin_ts = std::min(s.begin_ts, r.begin_ts);
    s.end_ts = std::max(s.end_ts, r.end_ts);
  }
  std::sort(lat.begin(), lat.end());
  const std::span<const Nanos> sorted(lat);
  s.p50 = percentile_sorted(sorted, 0.50);
  s.p90 = percentile_sorted(sorted, 0.90);
  s.p99 = percentile_sorted(sorted, 0.99);
  for (double p : extra_percentiles) {
    if (!(p > 0.0) || p > 1.0) throw ConfigError("percentile fraction must be in (0, 1]");
    s.extra.emplace_back(p, percentile_sorted(sorted, p));
  }
  s.cov = coefficient_of_variation(sorted);
  return s;
}

/// How to cut a trace into segments. Exactly one field is non-zero.
struct SegmentSpec {
  std::size_t tasks_per_segment = 0;
  Nanos duration = 0;      // by task begin time, aligned to the first task
  std::size_t count = 0;   // N segments of (nearly) equal task count

  static SegmentSpec by_tasks(std::size_t n) { return {n, 0, 0}; }
  static SegmentSpec by_duration(Nanos d) { return {0, d, 0}; }
  static SegmentSpec equal(std::size_t n) { return {0, 0, n}; }
};

struct Segment {
  SegmentStats stats;
  std::vector<TaskRecord> records;
};

struct SegmentSplit {
  std::vector<Segment> segments;
  std::vector<std::string> warnings;
};

/// Contiguous, non-overlapping segments in begin-time order. Empty segments
/// (possible when cutting by duration) are skipped with a warning.
inline SegmentSplit split_segments(std::vector<TaskRecord> records, const SegmentSpec& spec,
                                   const std::vector<double>& extra_percentiles = {}) {
  const int set = (spec.tasks_per_segment > 0) + (spec.duration > 0) + (spec.count > 0);
  if (set != 1) throw ConfigError("segment spec needs exactly one of tasks, duration, count");
  if (records.empty()) throw EmptyInput("no records to segment");
  std::stable_sort(records.begin(), records.end(), [](const TaskRecord& a, const TaskRecord& b) {
    return a.begin_ts != b.begin_ts ? a.begin_ts < b.begin_ts : a.end_ts < b.end_ts;
  });

  std::vector<std::size_t> bucket(records.size());
  std::size_t buckets = 0;
  const std::size_t n = records.size();
  if (spec.tasks_per_segment > 0) {
    for (std::size_t i = 0; i < n; ++i) bucket[i] = i / spec.tasks_per_segment;
    buckets = (n + spec.tasks_per_segment - 1) / spec.tasks_per_segment;
  } else if (spec.count > 0) {
    for (std::size_t i = 0; i < n; ++i) bucket[i] = i * spec.count / n;
    buckets = spec.count;
  } else {
    const Nanos t0 = records.front().begin_ts;
    for (std::size_t i = 0; i < n; ++i)
      bucket[i] = static_cast<std::size_t>((records[i].begin_ts - t0) / spec.duration);
    buckets = bucket.back() + 1;
  }

  SegmentSplit out;
  std::vector<std::vector<TaskRecord>> parts(buckets);
  for (std::size_t i = 0; i < n; ++i) parts[bucket[i]].push_back(std::move(records[i]));
  for (std::size_t b = 0; b < buckets; ++b) {
    if (parts[b].empty()) {
      out.warnings.push_back("segment " + std::to_string(b) + " is empty; skipped");
      continue;
    }
    Segment seg;
    seg.stats = segment_stats(parts[b], b, extra_percentiles);
    seg.records = std::move(parts[b]);
    out.segments.push_back(std::move(seg));
  }
  return out;
}

}  // namespace tailvar
