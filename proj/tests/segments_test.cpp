// Copyright 2026 The tailvar Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <string>
#include <vector>

#include "support.hpp"
#include "tailvar/segments.hpp"

namespace tailvar {
namespace {

std::vector<TaskRecord> steady(std::size_t n, Nanos gap, Nanos latency) {
  std::vector<TaskRecord> r;
  for (std::size_t i = 0; i < n; ++i) {
    const Nanos b = static_cast<Nanos>(i) * gap;
    r.push_back({"t" + std::to_string(i), b, b + latency, {}});
  }
  return r;
}

TEST(Segments, EqualCountSplitsIntoContiguousBlocks) {
  auto records = steady(1000, 100, 50);
  // Input order does not matter; segments follow begin time.
  std::reverse(records.begin(), records.end());
  const auto split = split_segments(records, SegmentSpec::equal(4));
  ASSERT_EQ(split.segments.size(), 4u);
  EXPECT_TRUE(split.warnings.empty());
  Nanos prev_end = -1;
  std::size_t total = 0;
  for (std::size_t s = 0; s < 4; ++s) {
    const auto& seg = split.segments[s];
    EXPECT_EQ(seg.stats.segment_index, s);
    EXPECT_EQ(seg.stats.task_count, 250u);
    EXPECT_GT(seg.records.front().begin_ts, prev_end);
    prev_end = seg.records.back().begin_ts;
    total += seg.records.size();
  }
  EXPECT_EQ(total, 1000u);
}

TEST(Segments, SlowSegmentShowsUpInItsStats) {
  auto records = steady(400, 100, 50);
  for (std::size_t i = 200; i < 300; ++i) records[i].end_ts = records[i].begin_ts + 500 + static_cast<Nanos>(i % 7);
  const auto split = split_segments(records, SegmentSpec::by_tasks(100));
  ASSERT_EQ(split.segments.size(), 4u);
  EXPECT_EQ(split.segments[0].stats.p99, 50);
  EXPECT_GE(split.segments[2].stats.p50, 500);
  EXPECT_GT(split.segments[2].stats.p99, split.segments[1].stats.p99);
  EXPECT_EQ(split.segments[0].stats.cov, 0.0);
  EXPECT_GT(split.segments[2].stats.cov, 0.0);
}

TEST(Segments, ByDurationSkipsEmptyWindowsWithAWarning) {
  std::vector<TaskRecord> records = {
      {"a", 0, 10, {}}, {"b", 50, 60, {}}, {"c", 350, 360, {}}, {"d", 399, 420, {}}};
  const auto split = split_segments(records, SegmentSpec::by_duration(100));
  ASSERT_EQ(split.segments.size(), 2u);
  EXPECT_EQ(split.segments[0].stats.segment_index, 0u);
  EXPECT_EQ(split.segments[1].stats.segment_index, 3u);
  ASSERT_EQ(split.warnings.size(), 2u);
  EXPECT_NE(split.warnings[0].find("segment 1"), std::string::npos);
}

TEST(Segments, ByTasksKeepsTheRemainder) {
  const auto split = split_segments(steady(250, 10, 5), SegmentSpec::by_tasks(100));
  ASSERT_EQ(split.segments.size(), 3u);
  EXPECT_EQ(split.segments[2].stats.task_count, 50u);
}

TEST(Segments, StatsUseNearestRank) {
  std::vector<TaskRecord> records;
  for (Nanos i = 1; i <= 100; ++i) records.push_back({"t" + std::to_string(i), 0, i, {}});
  const auto s = segment_stats(records, 7, {0.25});
  EXPECT_EQ(s.segment_index, 7u);
  EXPECT_EQ(s.p50, 50);
  EXPECT_EQ(s.p90, 90);
  EXPECT_EQ(s.p99, 99);
  ASSERT_EQ(s.extra.size(), 1u);
  EXPECT_EQ(s.extra[0].second, 25);
  EXPECT_EQ(s.begin_ts, 0);
  EXPECT_EQ(s.end_ts, 100);
  EXPECT_THROW(segment_stats(records, 0, {0.0}), ConfigError);
  EXPECT_THROW(segment_stats({}, 0), EmptyInput);
}

TEST(Segments, BadSpecs) {
  const auto records = steady(10, 10, 5);
  EXPECT_THROW(split_segments(records, SegmentSpec{}), ConfigError);
  EXPECT_THROW(split_segments(records, SegmentSpec{1, 1, 0}), ConfigError);
  EXPECT_THROW(split_segments({}, SegmentSpec::equal(2)), EmptyInput);
}

}  // namespace
}  // namespace tailvar
