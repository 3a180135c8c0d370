// Copyright 2026 The tailvar Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "support.hpp"
#include "tailvar/sim/ledger.hpp"
#include "tailvar/sim/machine.hpp"
#include "tailvar/sim/scripts.hpp"

namespace tailvar::sim {
namespace {

MachineConfig busy_machine(std::uint64_t seed) {
  MachineConfig m;
  m.cores = 3;
  m.seed = seed;
  m.counter_tick = 1000;
  m.max_nesting = 3;
  m.scheduler = {200 * kMicro, 20 * kMicro};
  m.interrupts.rate = 50'000;
  m.interrupts.burstiness = 3;
  m.interrupts.length = LengthDist::uniform(500, 3000);
  m.faults.rate = 20'000;
  m.faults.length = LengthDist::exponential(200, 800);
  m.counters = {{"ctr.A", 100, 20, 50}, {"ctr.B", 5, 5, 0}};
  return m;
}

WorkloadScenario busy_workload() {
  WorkloadScenario s;
  s.name = "busy";
  ThreadGroup g;
  g.task_prefix = "w";
  g.threads = 7;
  g.work = LengthDist::uniform(20 * kMicro, 80 * kMicro);
  g.think = LengthDist::exponential(0, 10 * kMicro);
  s.groups.push_back(g);
  ThreadGroup h;
  h.task_prefix = "z";
  h.threads = 2;
  h.work = LengthDist::fixed(30 * kMicro);
  s.groups.push_back(h);  // zero think time: back-to-back tasks
  return s;
}

TEST(Machine, SameSeedSameStream) {
  Machine a(busy_machine(3), busy_workload());
  Machine b(busy_machine(3), busy_workload());
  const auto ta = a.run(20 * kMilli);
  const auto tb = b.run(20 * kMilli);
  EXPECT_EQ(ta.events, tb.events);
  EXPECT_EQ(ta.names.tasks, tb.names.tasks);
  const auto tc = a.run(20 * kMilli);  // rerunning one instance resets it
  EXPECT_EQ(ta.events, tc.events);
  Machine other(busy_machine(4), busy_workload());
  EXPECT_NE(other.run(20 * kMilli).events, ta.events);
}

TEST(Machine, StreamsNestProperlyAndRespectMaxNesting) {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    auto cfg = busy_machine(seed);
    Machine m(cfg, busy_workload());
    const auto t = m.run(30 * kMilli);
    EXPECT_EQ(testing::nesting_problem(t.events), "") << "seed " << seed;
    EXPECT_LE(testing::max_depth(t.events), cfg.max_nesting);
    EXPECT_GE(testing::max_depth(t.events), 2u);
  }
}

TEST(Machine, TaskAndSchedulingBracketsAreConsistent) {
  Machine m(busy_machine(2), busy_workload());
  const auto t = m.run(30 * kMilli);
  std::map<CoreId, std::optional<std::uint64_t>> running;
  std::map<std::uint64_t, std::optional<std::int64_t>> open_task;
  std::size_t begins = 0, ends = 0;
  for (const auto& e : t.events) {
    switch (e.type) {
      case EventType::SchedIn:
        ASSERT_FALSE(running[e.core].has_value());
        running[e.core] = e.id;
        break;
      case EventType::SchedOut:
        ASSERT_EQ(running[e.core], e.id);
        running[e.core].reset();
        break;
      case EventType::TaskBegin:
        ASSERT_EQ(running[e.core], e.id);
        ASSERT_FALSE(open_task[e.id].has_value());
        open_task[e.id] = e.value;
        ++begins;
        break;
      case EventType::TaskEnd:
        ASSERT_EQ(running[e.core], e.id);
        ASSERT_EQ(open_task[e.id], e.value);
        open_task[e.id].reset();
        ++ends;
        break;
      default:
        break;
    }
  }
  EXPECT_GT(ends, 100u);
  EXPECT_LE(begins - ends, 9u);  // at most one unfinished task per thread
  // Names follow prefix + thread id + "." + per-thread serial.
  EXPECT_GE(t.names.tasks.size(), begins);
  EXPECT_LE(t.names.tasks.size(), begins + 9);
  std::set<std::string> unique(t.names.tasks.begin(), t.names.tasks.end());
  EXPECT_EQ(unique.size(), t.names.tasks.size());
}

TEST(Machine, NoInterruptsMeansZeroInterruptLength) {
  MachineConfig m;
  m.cores = 1;
  m.seed = 9;
  m.counters = {{"ctr.A", 3, 0, 0}};
  WorkloadScenario s;
  ThreadGroup g;
  g.threads = 1;
  g.work = LengthDist::uniform(10 * kMicro, 30 * kMicro);
  g.think = LengthDist::fixed(5 * kMicro);
  s.groups.push_back(g);
  Machine machine(m, s);
  const auto t = machine.run(5 * kMilli);
  for (const auto& e : t.events) {
    EXPECT_NE(e.type, EventType::InterruptStart);
    EXPECT_NE(e.type, EventType::FaultStart);
  }
  const auto ledger = ledger_oracle(t);
  ASSERT_GT(ledger.tasks.size(), 100u);
  for (const auto& r : ledger.tasks) {
    EXPECT_EQ(r.value("interrupt_len"), 0);
    EXPECT_EQ(r.value("interrupt_count"), 0);
    EXPECT_EQ(r.value("sched_wait_len"), 0);
    EXPECT_EQ(r.value("running_len"), r.latency());
  }
}

TEST(Machine, InterruptsNeverStraddleContextSwitches) {
  for (std::uint64_t seed = 10; seed < 14; ++seed) {
    Machine m(busy_machine(seed), busy_workload());
    const auto t = m.run(10 * kMilli);
    EXPECT_EQ(testing::nesting_problem(t.events), "");
  }
}

TEST(Machine, SameTimestampStateChangesPrecedeTicks) {
  Machine m(busy_machine(6), busy_workload());
  const auto t = m.run(10 * kMilli);
  std::map<CoreId, std::pair<Nanos, bool>> seen_tick;  // ts, tick seen at ts
  for (const auto& e : t.events) {
    auto& s = seen_tick[e.core];
    if (s.first != e.ts) s = {e.ts, false};
    if (e.type == EventType::CounterAdvance) {
      s.second = true;
    } else {
      EXPECT_FALSE(s.second) << "state change after a tick at " << e.ts;
    }
  }
}

TEST(Machine, InvalidConfigsAreRejected) {
  auto s = busy_workload();
  auto bad = [&](auto mutate) {
    auto m = busy_machine(1);
    mutate(m);
    return m;
  };
  EXPECT_THROW(Machine(bad([](MachineConfig& m) { m.cores = 0; }), s), ConfigError);
  EXPECT_THROW(Machine(bad([](MachineConfig& m) { m.interrupts.rate = -1; }), s), ConfigError);
  EXPECT_THROW(Machine(bad([](MachineConfig& m) { m.interrupts.length = LengthDist::uniform(10, 5); }), s),
               ConfigError);
  EXPECT_THROW(Machine(bad([](MachineConfig& m) { m.scheduler.jitter = m.scheduler.quantum; }), s), ConfigError);
  EXPECT_THROW(Machine(bad([](MachineConfig& m) { m.counter_tick = 0; }), s), ConfigError);
  EXPECT_THROW(Machine(bad([](MachineConfig& m) { m.interrupts.burstiness = 0.5; }), s), ConfigError);

  auto planted = s;
  planted.planted.push_back({"ctr.unknown", 0.1, 1000});
  EXPECT_THROW(Machine(busy_machine(1), planted), ConfigError);
  planted.planted = {{"interrupt_len", 1.5, 1000}};
  EXPECT_THROW(Machine(busy_machine(1), planted), ConfigError);

  WorkloadScenario empty;
  EXPECT_THROW(Machine(busy_machine(1), empty), ConfigError);

  Machine ok(busy_machine(1), s);
  EXPECT_THROW(ok.run(0), ConfigError);
}

// Interrupt start times from the ledger: batches show up as a surplus of
// gaps no longer than the intra-batch spread, while the long-run rate stays
// at the configured value.
TEST(Machine, BurstyArrivalsShowBatchesInTheLedger) {
  auto gaps_for = [](double burstiness) {
    MachineConfig m;
    m.cores = 1;
    m.seed = 21;
    m.max_nesting = 64;
    m.interrupts.rate = 20'000;
    m.interrupts.burstiness = burstiness;
    m.interrupts.batch_spread = 200;
    m.interrupts.length = LengthDist::fixed(20);
    WorkloadScenario s;
    ThreadGroup g;
    g.threads = 1;
    g.work = LengthDist::fixed(50 * kMicro);
    s.groups.push_back(g);
    Machine machine(m, s);
    const auto ledger = ledger_oracle(machine.run(kSecond));
    std::vector<Nanos> starts;
    for (const auto& i : ledger.instances)
      if (i.kind == FrameKind::Interrupt) starts.push_back(i.start);
    std::sort(starts.begin(), starts.end());
    std::vector<Nanos> gaps;
    for (std::size_t i = 1; i < starts.size(); ++i) gaps.push_back(starts[i] - starts[i - 1]);
    return gaps;
  };
  auto short_fraction = [](const std::vector<Nanos>& gaps) {
    std::size_t k = 0;
    for (auto g : gaps) k += g <= 220;
    return static_cast<double>(k) / static_cast<double>(gaps.size());
  };
  const auto smooth = gaps_for(1.0);
  const auto bursty = gaps_for(8.0);
  // Both runs keep the configured 20k/s within 10%.
  EXPECT_NEAR(static_cast<double>(smooth.size()), 20'000, 2'000);
  EXPECT_NEAR(static_cast<double>(bursty.size()), 20'000, 2'000);
  // Poisson: P(gap <= 220ns) at 20k/s is about 0.4%. Geometric batches with
  // mean 8 put 7 of every 8 gaps inside a batch.
  EXPECT_LT(short_fraction(smooth), 0.02);
  EXPECT_GT(short_fraction(bursty), 0.8);
}

TEST(Machine, PhaseBurstinessVariesBetweenPhases) {
  MachineConfig m;
  m.cores = 1;
  m.seed = 5;
  m.max_nesting = 64;
  m.interrupts.rate = 20'000;
  m.interrupts.burstiness = 1;
  m.interrupts.burstiness_max = 16;
  m.interrupts.phase_length = 50 * kMilli;
  m.interrupts.length = LengthDist::fixed(20);
  WorkloadScenario s;
  ThreadGroup g;
  g.threads = 1;
  s.groups.push_back(g);
  Machine machine(m, s);
  const auto ledger = ledger_oracle(machine.run(kSecond));
  std::map<Nanos, std::pair<std::size_t, std::size_t>> per_phase;  // short gaps, gaps
  Nanos prev = -1;
  for (const auto& i : ledger.instances) {
    if (prev >= 0) {
      auto& p = per_phase[i.start / m.interrupts.phase_length];
      p.first += (i.start - prev) <= 220;
      ++p.second;
    }
    prev = i.start;
  }
  double lo = 1, hi = 0;
  for (const auto& [phase, p] : per_phase) {
    const double f = static_cast<double>(p.first) / static_cast<double>(p.second);
    lo = std::min(lo, f);
    hi = std::max(hi, f);
  }
  EXPECT_GT(hi - lo, 0.3);
}

TEST(Machine, PlantedInterruptInflatesOnePercentOfTasks) {
  MachineConfig m;
  m.cores = 2;
  m.seed = 17;
  WorkloadScenario s;
  ThreadGroup g;
  g.threads = 2;
  g.work = LengthDist::fixed(40 * kMicro);
  g.think = LengthDist::fixed(1 * kMicro);
  s.groups.push_back(g);
  s.planted.push_back({"interrupt_len", 0.01, 100 * kMicro});
  Machine machine(m, s);
  const auto ledger = ledger_oracle(machine.run(kSecond));
  std::size_t hit = 0;
  for (const auto& r : ledger.tasks) {
    const auto irq = *r.value("interrupt_len");
    if (irq > 0) {
      ++hit;
      EXPECT_EQ(irq, 100 * kMicro);
      EXPECT_EQ(r.latency(), 140 * kMicro);
    } else {
      EXPECT_EQ(r.latency(), 40 * kMicro);
    }
  }
  const double frac = static_cast<double>(hit) / static_cast<double>(ledger.tasks.size());
  EXPECT_NEAR(frac, 0.01, 0.003);
}

TEST(Machine, PlantedCounterAddsWorkAndBoost) {
  MachineConfig m;
  m.cores = 1;
  m.seed = 3;
  m.counter_tick = 1000;
  m.counters = {{"ctr.A", 10, 0, 0}, {"ctr.B", 10, 0, 0}};
  WorkloadScenario s;
  ThreadGroup g;
  g.threads = 1;
  g.work = LengthDist::fixed(20 * kMicro);
  g.think = LengthDist::fixed(1000);
  s.groups.push_back(g);
  s.planted.push_back({"ctr.A", 0.05, 20 * kMicro, 2.0});
  Machine machine(m, s);
  const auto ledger = ledger_oracle(machine.run(50 * kMilli));
  std::size_t planted = 0;
  for (const auto& r : ledger.tasks) {
    if (r.latency() == 40 * kMicro) {
      ++planted;
      EXPECT_EQ(*r.value("ctr.A"), 2 * *r.value("ctr.B"));
    } else {
      EXPECT_EQ(r.latency(), 20 * kMicro);
      EXPECT_EQ(*r.value("ctr.A"), *r.value("ctr.B"));
    }
  }
  EXPECT_GT(planted, 0u);
}

TEST(Machine, PlantedWaitBlocksTheThread) {
  MachineConfig m;
  m.cores = 1;
  m.seed = 8;
  WorkloadScenario s;
  ThreadGroup g;
  g.threads = 1;
  g.work = LengthDist::fixed(20 * kMicro);
  s.groups.push_back(g);
  s.planted.push_back({"sched_wait_len", 0.05, 70 * kMicro});
  Machine machine(m, s);
  const auto ledger = ledger_oracle(machine.run(50 * kMilli));
  std::size_t planted = 0;
  for (const auto& r : ledger.tasks) {
    if (*r.value("sched_wait_len") > 0) {
      ++planted;
      EXPECT_EQ(*r.value("sched_wait_len"), 70 * kMicro);
      EXPECT_EQ(r.latency(), 90 * kMicro);
    }
  }
  EXPECT_GT(planted, 0u);
}

TEST(NestedFuzz, DepthOneHasNoPreemptor) {
  const auto ev = nested_preemption_fuzz(1, 1, 5000);
  EXPECT_EQ(testing::nesting_problem(ev), "");
  EXPECT_EQ(testing::max_depth(ev), 1u);
}

TEST(NestedFuzz, DepthThreeIsLifoAndReproducible) {
  const auto ev = nested_preemption_fuzz(2, 3, 10'000);
  EXPECT_EQ(testing::nesting_problem(ev), "");
  EXPECT_EQ(testing::max_depth(ev), 3u);
  std::size_t starts = 0;
  for (const auto& e : ev) starts += is_frame_start(e.type);
  EXPECT_EQ(starts, 10'000u);
  EXPECT_EQ(ev, nested_preemption_fuzz(2, 3, 10'000));
  EXPECT_NE(ev, nested_preemption_fuzz(3, 3, 10'000));
  EXPECT_THROW(nested_preemption_fuzz(1, 0, 10), ConfigError);
}

TEST(FuzzWorkload, StreamsAreValid) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    FuzzWorkload w;
    w.seed = seed;
    w.instances = 3000;
    const auto t = fuzz_workload(w);
    EXPECT_EQ(testing::nesting_problem(t.events), "");
    EXPECT_LE(testing::max_depth(t.events), w.depth_max);
  }
}

TEST(DumpEvents, OneEventPerLine) {
  const auto t = walkthrough_trace();
  std::ostringstream out;
  dump_events(out, t.events, t.names);
  const std::string s = out.str();
  EXPECT_EQ(static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')), t.events.size());
  EXPECT_NE(s.find("0 1 SchedIn 1 0\n"), std::string::npos);
  EXPECT_NE(s.find("TaskBegin 2 1 loop2"), std::string::npos);
}

}  // namespace
}  // namespace tailvar::sim
