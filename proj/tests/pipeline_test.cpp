// Copyright 2026 The tailvar Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sstream>
#include <string>

#include "tailvar/config_io.hpp"
#include "tailvar/pipeline.hpp"

namespace tailvar {
namespace {

std::string source_path(const std::string& rel) { return std::string(TAILVAR_SOURCE_DIR) + "/" + rel; }

SimulationResult run_loopbench(const std::string& catalog_file, std::uint64_t seed, Nanos duration,
                               std::ostream* trace_out = nullptr) {
  const auto f = config::scenario_from_json(config::load_json_file(source_path("scenarios/loopbench.json")));
  auto machine = *f.machine;
  machine.seed = seed;
  auto rc = f.recorder.value_or(RecorderConfig{});
  rc.seed = seed;
  rc.epoch_length = 2 * kMilli;
  SimulationOptions opt;
  opt.duration = duration;
  opt.trace_out = trace_out;
  return simulate_and_record(machine, f.workload, config::load_catalog(source_path(catalog_file)), rc, opt);
}

TEST(Pipeline, RecordsMatchLedger) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto sim = run_loopbench("catalogs/sim.json", seed, 20 * kMilli);
    ASSERT_TRUE(sim.ledger.has_value());
    ASSERT_FALSE(sim.records.empty());
    const auto v = verify_against_ledger(sim.records, sim.ledger->tasks);
    EXPECT_TRUE(v.ok()) << "seed " << seed << ": " << v.diffs.size() << " diffs";
    EXPECT_EQ(v.tasks_checked, sim.records.size());
    EXPECT_GT(v.values_checked, sim.records.size());
    EXPECT_GT(sim.events, 0u);
  }
}

TEST(Pipeline, TraceSinkMatchesCollectedRecords) {
  std::ostringstream out;
  const auto sim = run_loopbench("catalogs/sim.json", 4, 10 * kMilli, &out);
  const auto decoded = decode_trace(out.str());
  EXPECT_TRUE(decoded.ok());
  EXPECT_EQ(decoded.records, sim.records);
}

TEST(Pipeline, UnmodelledCountersAreZeroInLedger) {
  const auto sim = run_loopbench("catalogs/default.json", 5, 20 * kMilli);
  ASSERT_TRUE(sim.ledger.has_value());
  ASSERT_FALSE(sim.ledger->tasks.empty());
  // Not advanced by any shipped scenario.
  const std::string unmodelled = "ctr.L2_RQSTS.ALL_DEMAND_MISS";
  for (const auto& t : sim.ledger->tasks) EXPECT_EQ(t.value(unmodelled), 0);
  const auto v = verify_against_ledger(sim.records, sim.ledger->tasks);
  EXPECT_TRUE(v.ok());
}

TEST(Pipeline, PerturbedLedgerIsReported) {
  const auto sim = run_loopbench("catalogs/sim.json", 6, 10 * kMilli);
  auto truth = sim.ledger->tasks;
  ASSERT_FALSE(sim.records.empty());
  const auto& victim = sim.records.front();
  auto* t = &truth[0];
  for (auto& r : truth)
    if (r.task_id == victim.task_id) t = &r;
  ASSERT_EQ(t->task_id, victim.task_id);
  t->values[std::string(kernel_events::kRunningLen)] += 1;
  const auto v = verify_against_ledger(sim.records, truth);
  ASSERT_EQ(v.diffs.size(), 1u);
  EXPECT_EQ(v.diffs[0].task_id, victim.task_id);
  EXPECT_EQ(v.diffs[0].event, kernel_events::kRunningLen);
  EXPECT_EQ(*v.diffs[0].expected, *v.diffs[0].recorded + 1);
}

TEST(Pipeline, MissingTaskAndForeignLedger) {
  const auto sim = run_loopbench("catalogs/sim.json", 7, 10 * kMilli);
  auto truth = sim.ledger->tasks;
  ASSERT_GE(sim.records.size(), 2u);
  std::erase_if(truth, [&](const TaskRecord& r) { return r.task_id == sim.records[0].task_id; });
  const auto v = verify_against_ledger(sim.records, truth);
  ASSERT_EQ(v.diffs.size(), 1u);
  EXPECT_EQ(v.diffs[0].event, "record");

  std::vector<TaskRecord> foreign = {TaskRecord{"other.1.1", 0, 10, {}}};
  EXPECT_THROW(verify_against_ledger(sim.records, foreign), MismatchedRun);
  EXPECT_TRUE(verify_against_ledger({}, foreign).ok());
}

TEST(Pipeline, RepeatedRunsAreIdentical) {
  std::ostringstream a, b;
  run_loopbench("catalogs/sim.json", 8, 10 * kMilli, &a);
  run_loopbench("catalogs/sim.json", 8, 10 * kMilli, &b);
  EXPECT_EQ(a.str(), b.str());
  std::ostringstream c;
  run_loopbench("catalogs/sim.json", 9, 10 * kMilli, &c);
  EXPECT_NE(a.str(), c.str());
}

}  // namespace
}  // namespace tailvar
