// Copyright 2026 The tailvar Authors
// SPDX-License-Identifier: Apache-2.0

// Hand-written and randomly generated event streams for exercising the
// recorder without the scheduler in the loop.

#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tailvar/common.hpp"
#include "tailvar/sim/machine.hpp"

namespace tailvar::sim {

/// The two-thread, two-core walk-through used to explain per-task
/// recording. Times in microseconds:
///
///   T1 on Core1 runs loop1 over [0, 100], then loop3 from 120.
///   T2 on Core2 runs loop2 over [10, 110] and is switched out at 115.
///   T1 is switched out at 170 and back in on Core2 at 190.
///   An interrupt preempts T1 on Core2 over [220, 250]; loop3 ends at 270.
///
/// Both cores tick one counter every 10 us while busy: delta 1 in thread
/// context, 100 inside the interrupt.
inline SimTrace walkthrough_trace() {
  constexpr ThreadId kT1 = 1, kT2 = 2;
  constexpr CoreId kCore1 = 1, kCore2 = 2;
  constexpr Nanos us = kMicro;

  struct Item {
    MachineEvent e;
    int phase;  // 0 = state change, 1 = counter tick
  };
  std::vector<Item> items;
  auto state = [&](Nanos t, CoreId c, EventType type, std::uint64_t id, std::int64_t v = 0) {
    items.push_back({{t * us, c, type, id, v}, 0});
  };
  state(0, kCore1, EventType::SchedIn, kT1);
  state(0, kCore1, EventType::TaskBegin, kT1, 0);
  state(10, kCore2, EventType::SchedIn, kT2);
  state(10, kCore2, EventType::TaskBegin, kT2, 1);
  state(100, kCore1, EventType::TaskEnd, kT1, 0);
  state(110, kCore2, EventType::TaskEnd, kT2, 1);
  state(115, kCore2, EventType::SchedOut, kT2, 1);
  state(120, kCore1, EventType::TaskBegin, kT1, 2);
  state(170, kCore1, EventType::SchedOut, kT1, 1);
  state(190, kCore2, EventType::SchedIn, kT1);
  state(220, kCore2, EventType::InterruptStart, 0);
  state(250, kCore2, EventType::InterruptEnd, 0);
  state(270, kCore2, EventType::TaskEnd, kT1, 2);
  state(270, kCore2, EventType::SchedOut, kT1, 1);

  struct Busy {
    CoreId core;
    Nanos from, to;
    std::int64_t delta;
  };
  const Busy busy[] = {
      {kCore1, 0, 100, 1},   {kCore1, 100, 170, 1}, {kCore2, 10, 115, 1},
      {kCore2, 190, 220, 1}, {kCore2, 220, 250, 100}, {kCore2, 250, 270, 1},
  };
  for (const auto& b : busy)
    for (Nanos t = b.from; t < b.to; t += 10)
      items.push_back({{t * us, b.core, EventType::CounterAdvance, 0, b.delta}, 1});

  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    if (a.e.ts != b.e.ts) return a.e.ts < b.e.ts;
    return a.phase < b.phase;
  });
  SimTrace out;
  for (const auto& i : items) out.events.push_back(i.e);
  out.names.tasks = {"loop1", "loop2", "loop3"};
  out.names.counters = {"ctr.TLB_MISS"};
  return out;
}

/// Random properly nested interrupt/fault frames on core 0. Frames have
/// random lengths; no frame nests deeper than depth_max.
inline std::vector<MachineEvent> nested_preemption_fuzz(std::uint64_t seed, std::uint32_t depth_max,
                                                        std::uint64_t n_instances) {
  if (depth_max < 1) throw ConfigError("depth_max must be >= 1");
  Rng rng(seed, 7);
  std::vector<MachineEvent> out;
  std::vector<std::pair<std::uint64_t, FrameKind>> stack;
  Nanos t = 0;
  std::uint64_t started = 0;
  while (started < n_instances || !stack.empty()) {
    t += rng.between(0, 50);
    const bool can_push = started < n_instances && stack.size() < depth_max;
    const bool push = can_push && (stack.empty() || rng.chance(0.5));
    if (push) {
      const auto kind = rng.chance(0.3) ? FrameKind::Fault : FrameKind::Interrupt;
      stack.emplace_back(started, kind);
      out.push_back({t, 0, kind == FrameKind::Fault ? EventType::FaultStart : EventType::InterruptStart,
                     started, 0});
      ++started;
      t += 1;  // every frame lasts at least 1 ns
    } else {
      const auto [id, kind] = stack.back();
      stack.pop_back();
      out.push_back({t, 0, kind == FrameKind::Fault ? EventType::FaultEnd : EventType::InterruptEnd, id, 0});
    }
  }
  return out;
}

struct FuzzWorkload {
  std::uint64_t seed = 1;
  std::uint32_t cores = 3;
  std::uint32_t threads = 5;
  std::uint32_t depth_max = 5;
  std::uint64_t instances = 10'000;  // interrupt/fault frames to generate
  std::uint32_t counters = 4;
  Nanos max_gap = 40;
};

/// A full random stream: threads migrate between cores, tasks begin and end
/// in thread context, frames nest to depth_max on every core, and counter
/// ticks land anywhere, including idle cores and inside frames. Frames are
/// only ever open while no context switch or task boundary happens on that
/// core, which is the contract the recorder relies on.
inline SimTrace fuzz_workload(const FuzzWorkload& w) {
  if (w.cores < 1 || w.threads < 1 || w.depth_max < 1) throw ConfigError("invalid fuzz workload");
  Rng rng(w.seed, 11);
  struct CoreState {
    std::optional<ThreadId> running;
    std::vector<std::pair<std::uint64_t, FrameKind>> stack;
  };
  struct ThreadState {
    bool on_core = false;
    std::optional<std::uint64_t> task;
  };
  std::vector<CoreState> cores(w.cores);
  std::vector<ThreadState> threads(w.threads);
  SimTrace out;
  for (std::uint32_t c = 0; c < w.counters; ++c) out.names.counters.push_back("ctr.F" + std::to_string(c));

  Nanos t = 0;
  std::uint64_t started = 0;
  auto emit = [&](CoreId c, EventType type, std::uint64_t id, std::int64_t v = 0) {
    out.events.push_back({t, c, type, id, v});
  };
  auto frames_open = [&] {
    return std::any_of(cores.begin(), cores.end(), [](const CoreState& c) { return !c.stack.empty(); });
  };

  while (started < w.instances || frames_open()) {
    t += rng.between(0, w.max_gap);
    const auto c = static_cast<CoreId>(rng.below(w.cores));
    auto& core = cores[c];
    const bool draining = started >= w.instances;

    if (rng.chance(0.35) && !draining) {
      const auto ctr = rng.below(w.counters);
      emit(c, EventType::CounterAdvance, ctr, rng.between(1, 1000));
      continue;
    }
    if (!core.stack.empty()) {
      if (!draining && core.stack.size() < w.depth_max && rng.chance(0.45)) {
        const auto kind = rng.chance(0.3) ? FrameKind::Fault : FrameKind::Interrupt;
        core.stack.emplace_back(started, kind);
        emit(c, kind == FrameKind::Fault ? EventType::FaultStart : EventType::InterruptStart, started++);
      } else {
        const auto [id, kind] = core.stack.back();
        core.stack.pop_back();
        emit(c, kind == FrameKind::Fault ? EventType::FaultEnd : EventType::InterruptEnd, id);
      }
      continue;
    }
    if (draining) continue;

    const auto roll = rng.below(100);
    if (roll < 25) {
      const auto kind = rng.chance(0.3) ? FrameKind::Fault : FrameKind::Interrupt;
      core.stack.emplace_back(started, kind);
      emit(c, kind == FrameKind::Fault ? EventType::FaultStart : EventType::InterruptStart, started++);
    } else if (core.running) {
      auto& th = threads[*core.running];
      if (roll < 45) {
        emit(c, EventType::SchedOut, *core.running, rng.chance(0.5) ? 1 : 0);
        th.on_core = false;
        core.running.reset();
      } else if (roll < 75) {
        if (th.task) {
          emit(c, EventType::TaskEnd, *core.running, static_cast<std::int64_t>(*th.task));
          th.task.reset();
        } else {
          th.task = out.names.tasks.size();
          out.names.tasks.push_back("f" + std::to_string(*th.task));
          emit(c, EventType::TaskBegin, *core.running, static_cast<std::int64_t>(*th.task));
        }
      }
    } else {
      std::vector<ThreadId> idle;
      for (ThreadId i = 0; i < w.threads; ++i)
        if (!threads[i].on_core) idle.push_back(i);
      if (!idle.empty()) {
        const ThreadId pick = idle[rng.below(idle.size())];
        threads[pick].on_core = true;
        core.running = pick;
        emit(c, EventType::SchedIn, pick);
      }
    }
  }
  return out;
}

}  // namespace tailvar::sim
