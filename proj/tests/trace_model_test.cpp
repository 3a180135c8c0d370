// Copyright 2026 The tailvar Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"
#include "tailvar/stats.hpp"
#include "tailvar/trace_model.hpp"

namespace tailvar {
namespace {

TaskRecord loop2_record() {
  TaskRecord r;
  r.task_id = "loop2";
  r.begin_ts = 10'000;
  r.end_ts = 110'000;
  r.values = {{"running_len", 100'000}, {"sched_wait_len", 0}, {"interrupt_len", 0}, {"ctr.TLB_MISS", 3}};
  return r;
}

TEST(Catalog, RejectsDuplicatesAndBadGroups) {
  EventCatalog c;
  c.add({"ctr.A", EventKind::CpuCounter, EventGroup::INST, false, true});
  EXPECT_THROW(c.add({"ctr.A", EventKind::CpuCounter, EventGroup::INST, false, true}), ConfigError);
  EXPECT_THROW(c.add({"k", EventKind::KernelLength, EventGroup::INST, false, false}), ConfigError);
  EXPECT_THROW(c.add({"ctr.B", EventKind::CpuCounter, EventGroup::KERNEL, false, true}), ConfigError);
  EXPECT_THROW(c.add({"ctr.C", EventKind::CpuCounter, EventGroup::CACHE, true, true}), ConfigError);
  EXPECT_THROW(c.add({"bad name", EventKind::CpuCounter, EventGroup::CACHE, false, true}), ConfigError);
}

TEST(Catalog, ParentChildMustBeAcyclicMembers) {
  EventCatalog c;
  c.add({"ctr.A", EventKind::CpuCounter, EventGroup::INST, false, true});
  c.add({"ctr.B", EventKind::CpuCounter, EventGroup::INST, false, true});
  c.add_parent_child("ctr.A", "ctr.B");
  EXPECT_NO_THROW(c.validate());
  c.add_parent_child("ctr.B", "ctr.A");
  EXPECT_THROW(c.validate(), ConfigError);

  EventCatalog d;
  d.add({"ctr.A", EventKind::CpuCounter, EventGroup::INST, false, true});
  d.add_parent_child("ctr.A", "ctr.missing");
  EXPECT_THROW(d.validate(), ConfigError);
}

TEST(Catalog, StandardKernelEventsAreEight) {
  const auto k = EventCatalog::standard_kernel_events();
  EXPECT_EQ(k.size(), 8u);
  EventCatalog c;
  for (const auto& e : k) c.add(e);
  EXPECT_EQ(c.counters_per_epoch(), 7u);
  EXPECT_NE(c.find("running_len"), EventCatalog::npos);
  EXPECT_EQ(c.find("nope"), EventCatalog::npos);
}

TEST(Encode, Loop2LineCarriesExactlyItsPairs) {
  const std::string line = encode_record(loop2_record());
  EXPECT_EQ(line,
            "loop2\t10000\t110000\tctr.TLB_MISS=3,interrupt_len=0,running_len=100000,sched_wait_len=0\n");
  auto back = decode_trace(line);
  ASSERT_TRUE(back.ok());
  ASSERT_EQ(back.records.size(), 1u);
  EXPECT_EQ(back.records[0], loop2_record());
  EXPECT_EQ(back.records[0].values.size(), 4u);
}

TEST(Encode, EmptyValuesGiveLatencyOnlyLine) {
  TaskRecord r{"x", 5, 9, {}};
  EXPECT_EQ(encode_record(r), "x\t5\t9\n");
  auto back = decode_trace(encode_record(r));
  ASSERT_TRUE(back.ok());
  EXPECT_EQ(back.records[0], r);
  EXPECT_EQ(back.records[0].latency(), 4);
}

TEST(Encode, RejectsInvalidRecords) {
  EXPECT_THROW(encode_record(TaskRecord{"x", 10, 5, {}}), ConfigError);
  EXPECT_THROW(encode_record(TaskRecord{"x", 0, 5, {{"a", -1}}}), ConfigError);
  EXPECT_THROW(encode_record(TaskRecord{"", 0, 5, {}}), ConfigError);
}

TEST(Encode, RoundTripThousandRandomRecords) {
  Rng rng(42);
  const std::vector<std::string> events = {"ctr.A", "ctr.B.C", "sched_wait_len", "x_unknown_event", "z"};
  std::vector<TaskRecord> records;
  for (std::size_t i = 0; i < 1000; ++i) records.push_back(testing::random_record(rng, i, events));
  const std::string bytes = encode_trace(records);
  auto decoded = decode_trace(bytes);
  ASSERT_TRUE(decoded.ok());
  EXPECT_EQ(decoded.records, records);
  EXPECT_EQ(encode_trace(decoded.records), bytes);

  std::istringstream in(bytes);
  auto from_stream = decode_trace(in);
  EXPECT_EQ(from_stream.records, records);
}

TEST(Decode, ReportsMalformedLinesAndContinues) {
  const std::string text =
      "# tailvar-trace v1\n"
      "a\t0\t10\tx=1\n"
      "b\t10\t5\n"         // negative latency
      "c\t0\tten\n"        // not a number
      "d\t0\t10\tx=-2\n"   // negative value
      "e\t0\t10\tx1\n"     // missing '='
      "f\t0\n"             // too few fields
      "\n"                 // blank lines are ignored
      "g\t1\t2\tx=1,x=2\n" // duplicate key
      "h\t0\t10\n";
  auto r = decode_trace(text);
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.records[0].task_id, "a");
  EXPECT_EQ(r.records[1].task_id, "h");
  ASSERT_EQ(r.errors.size(), 6u);
  EXPECT_EQ(r.errors[0].line_no, 3u);
  EXPECT_NE(r.errors[0].reason.find("negative latency"), std::string::npos);
  EXPECT_EQ(r.errors[1].line_no, 4u);
  EXPECT_EQ(r.errors[5].line_no, 9u);
}

TEST(Decode, TruncatedFinalLineIsMalformedWithLineNumber) {
  const std::string text = "# tailvar-trace v1\na\t0\t10\tx=1\nb\t0\t1";
  auto r = decode_trace(text);
  ASSERT_EQ(r.records.size(), 1u);
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].line_no, 3u);
  EXPECT_NE(r.errors[0].reason.find("truncated"), std::string::npos);
}

// Corrupt valid files at random: decoding never throws, every error names a
// line that exists, and every line left untouched still decodes.
TEST(Decode, FuzzCorruptedFiles) {
  Rng rng(7);
  const std::vector<std::string> events = {"ctr.A", "interrupt_len", "q"};
  for (int round = 0; round < 300; ++round) {
    std::vector<TaskRecord> records;
    const std::size_t n = 1 + rng.below(30);
    for (std::size_t i = 0; i < n; ++i) records.push_back(testing::random_record(rng, i, events));
    std::string bytes = encode_trace(records);
    const std::string original = bytes;
    const std::size_t edits = 1 + rng.below(4);
    for (std::size_t k = 0; k < edits; ++k) {
      const auto pos = rng.below(bytes.size());
      switch (rng.below(3)) {
        case 0: bytes[pos] = static_cast<char>("\t=,-x9\n#"[rng.below(8)]); break;
        case 1: bytes.erase(pos, 1); break;
        default: bytes.resize(pos); break;
      }
    }
    DecodeResult r;
    ASSERT_NO_THROW(r = decode_trace(bytes));
    const std::size_t lines = static_cast<std::size_t>(std::count(bytes.begin(), bytes.end(), '\n')) + 1;
    for (const auto& e : r.errors) {
      EXPECT_GE(e.line_no, 1u);
      EXPECT_LE(e.line_no, lines);
      EXPECT_FALSE(e.reason.empty());
    }
    for (const auto& rec : r.records) EXPECT_FALSE(record_problem(rec).has_value());
    std::set<std::string> decoded_lines;
    for (const auto& rec : r.records) decoded_lines.insert(encode_record(rec));
    std::set<std::string> original_lines;
    for (const auto& rec : records) original_lines.insert(encode_record(rec));
    for (std::size_t start = 0, nl; (nl = bytes.find('\n', start)) != std::string::npos; start = nl + 1) {
      const std::string line = bytes.substr(start, nl - start + 1);
      if (original_lines.count(line)) {
        EXPECT_TRUE(decoded_lines.count(line)) << line;
      }
    }
    const auto last_nl = bytes.find_last_of('\n');
    const std::string tail = last_nl == std::string::npos ? bytes : bytes.substr(last_nl + 1);
    if (!tail.empty() && tail != "\r" && tail.front() != '#') {
      ASSERT_FALSE(r.errors.empty());
      EXPECT_EQ(r.errors.back().line_no, lines);
      EXPECT_NE(r.errors.back().reason.find("truncated"), std::string::npos);
    }
  }
}

TEST(Percentile, NearestRankExamples) {
  std::vector<double> v(9, 100.0);
  v.push_back(500.0);
  EXPECT_EQ(percentile(v, 0.95), 500.0);
  EXPECT_EQ(percentile(std::vector<double>{7.0}, 0.01), 7.0);
  EXPECT_EQ(percentile(std::vector<double>{7.0}, 1.0), 7.0);
  std::vector<double> one_to_100;
  for (int i = 1; i <= 100; ++i) one_to_100.push_back(i);
  EXPECT_EQ(percentile(one_to_100, 0.5), 50.0);
  EXPECT_EQ(percentile(one_to_100, 0.07), 7.0);
  EXPECT_THROW(percentile(std::vector<double>{}, 0.5), EmptyInput);
  EXPECT_THROW(percentile(one_to_100, 0.0), ConfigError);
}

TEST(Percentile, MonotoneAndPermutationInvariant) {
  Rng rng(3);
  for (int round = 0; round < 200; ++round) {
    std::vector<double> v(1 + rng.below(60));
    for (auto& x : v) x = static_cast<double>(rng.between(-50, 50));
    double prev = -1e300;
    for (int k = 1; k <= 100; ++k) {
      const double p = k / 100.0;
      const double q = percentile(v, p);
      EXPECT_GE(q, prev);
      EXPECT_EQ(q, testing::naive_percentile(v, p));
      prev = q;
    }
    auto shuffled = v;
    for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
    const double p = (1 + rng.below(100)) / 100.0;
    EXPECT_EQ(percentile(v, p), percentile(shuffled, p));
  }
}

TEST(CoefficientOfVariation, ScaleFree) {
  Rng rng(11);
  for (int round = 0; round < 200; ++round) {
    std::vector<double> v(2 + rng.below(50));
    for (auto& x : v) x = 1 + static_cast<double>(rng.below(1000));
    const double c = 0.001 + rng.uniform01() * 1000;
    std::vector<double> scaled = v;
    for (auto& x : scaled) x *= c;
    const double a = coefficient_of_variation(std::span<const double>(v));
    const double b = coefficient_of_variation(std::span<const double>(scaled));
    EXPECT_GE(a, 0);
    EXPECT_NEAR(a, b, 1e-9 * std::max(1.0, a));
  }
  std::vector<double> flat(10, 4.0);
  EXPECT_EQ(coefficient_of_variation(std::span<const double>(flat)), 0.0);
  std::vector<double> two = {1.0, 3.0};  // mean 2, population sd 1
  EXPECT_DOUBLE_EQ(coefficient_of_variation(std::span<const double>(two)), 0.5);
}

}  // namespace
}  // namespace tailvar
