// Copyright 2026 The tailvar Authors
// SPDX-License-Identifier: Apache-2.0

// Ground truth for the recorder, computed from a machine event stream by
// interval arithmetic alone.
//
// Every event is identified by its key (ts, position in the stream). Frames
// are intervals of keys; nesting is checked as laminarity of those intervals
// and a frame's net length is its span minus the union of the frames inside
// it. Nothing here replays a stack, so agreement with the recorder's shadow
// stack is evidence rather than tautology.

#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "tailvar/sim/machine.hpp"
#include "tailvar/trace_model.hpp"

namespace tailvar::sim {

struct StreamKey {
  Nanos ts = 0;
  std::uint64_t seq = 0;
  friend auto operator<=>(const StreamKey&, const StreamKey&) = default;
};

inline constexpr StreamKey kEndOfStream{std::numeric_limits<Nanos>::max(),
                                        std::numeric_limits<std::uint64_t>::max()};

struct InstanceTruth {
  std::uint64_t instance = 0;
  CoreId core = 0;
  FrameKind kind = FrameKind::Interrupt;
  Nanos start = 0;
  Nanos end = 0;
  Nanos net = 0;  // end - start minus the time covered by nested frames
};

struct GroundTruthLedger {
  std::vector<TaskRecord> tasks;           // completed tasks, in completion order
  std::vector<InstanceTruth> instances;    // sorted by instance id

  const TaskRecord* find(std::string_view task_id) const {
    if (index_.size() != tasks.size()) {
      index_.clear();
      for (std::size_t i = 0; i < tasks.size(); ++i) index_.emplace(tasks[i].task_id, i);
    }
    auto it = index_.find(std::string(task_id));
    return it == index_.end() ? nullptr : &tasks[it->second];
  }

  std::optional<Nanos> net_length(std::uint64_t instance) const {
    auto it = std::lower_bound(instances.begin(), instances.end(), instance,
                               [](const InstanceTruth& t, std::uint64_t id) { return t.instance < id; });
    if (it == instances.end() || it->instance != instance) return std::nullopt;
    return it->net;
  }

 private:
  mutable std::unordered_map<std::string, std::size_t> index_;
};

/// Two-phase oracle. Feed every non-counter event to observe_structure(),
/// call finalize_structure(), then feed the CounterAdvance events to
/// observe_counter(). `seq` must be the event's position in the full stream
/// in both phases, which lets a caller regenerate a deterministic stream for
/// the second phase instead of holding it in memory.
class LedgerOracle {
 public:
  void observe_structure(const MachineEvent& e, std::uint64_t seq) {
    const StreamKey key{e.ts, seq};
    switch (e.type) {
      case EventType::InterruptStart:
      case EventType::FaultStart: {
        if (open_frames_.count(e.id) || closed_ids_.count(e.id))
          throw NestingViolation("frame id " + std::to_string(e.id) + " started twice");
        open_frames_.emplace(e.id, frames_.size());
        frames_.push_back({e.id, e.core, frame_kind(e.type), key, kEndOfStream});
        break;
      }
      case EventType::InterruptEnd:
      case EventType::FaultEnd: {
        auto it = open_frames_.find(e.id);
        if (it == open_frames_.end())
          throw NestingViolation("end of frame " + std::to_string(e.id) + " that is not open");
        auto& f = frames_[it->second];
        if (f.core != e.core || f.kind != frame_kind(e.type))
          throw NestingViolation("frame " + std::to_string(e.id) + " ends on another core or kind");
        f.end = key;
        closed_ids_.insert(e.id);
        open_frames_.erase(it);
        break;
      }
      case EventType::SchedIn: {
        auto& t = threads_[static_cast<ThreadId>(e.id)];
        if (t.on_core)
          throw NestingViolation("thread " + std::to_string(e.id) + " scheduled in twice");
        t.on_core = true;
        t.segments.push_back({e.core, key, kEndOfStream, false});
        break;
      }
      case EventType::SchedOut: {
        auto& t = threads_[static_cast<ThreadId>(e.id)];
        if (!t.on_core || t.segments.back().core != e.core)
          throw NestingViolation("thread " + std::to_string(e.id) + " scheduled out while not on core " +
                                 std::to_string(e.core));
        t.on_core = false;
        t.segments.back().out = key;
        t.segments.back().blocked = e.value != 0;
        break;
      }
      case EventType::TaskBegin: {
        auto& t = threads_[static_cast<ThreadId>(e.id)];
        if (!t.on_core || t.segments.back().core != e.core)
          throw NestingViolation("task begins on a thread that is not running there");
        if (t.open_task)
          throw NestingViolation("task begins while thread " + std::to_string(e.id) + " has one open");
        t.open_task = TaskSpan{static_cast<ThreadId>(e.id), static_cast<std::uint64_t>(e.value), key,
                               kEndOfStream};
        break;
      }
      case EventType::TaskEnd: {
        auto& t = threads_[static_cast<ThreadId>(e.id)];
        if (!t.open_task || t.open_task->index != static_cast<std::uint64_t>(e.value))
          throw NestingViolation("task end without a matching begin on thread " + std::to_string(e.id));
        if (!t.on_core || t.segments.back().core != e.core)
          throw NestingViolation("task ends on a thread that is not running there");
        t.open_task->end = key;
        tasks_.push_back(*t.open_task);
        t.open_task.reset();
        break;
      }
      case EventType::CounterAdvance:
        break;
    }
  }

  void finalize_structure(const StreamNames& names) {
    names_ = names;
    if (!open_frames_.empty()) throw NestingViolation("stream ends with open interrupt/fault frames");

    for (std::size_t i = 0; i < frames_.size(); ++i) by_core_[frames_[i].core].frames.push_back(i);
    for (auto& [core, cf] : by_core_) index_core(cf);

    // Task accounting.
    values_.assign(tasks_.size(), TaskValues{});
    for (std::size_t ti = 0; ti < tasks_.size(); ++ti) account_task(ti);

    for (auto& [core, cf] : by_core_) {
      std::sort(cf.windows.begin(), cf.windows.end(),
                [](const Window& a, const Window& b) { return a.from < b.from; });
      for (std::size_t i = 1; i < cf.windows.size(); ++i)
        if (cf.windows[i].from < cf.windows[i - 1].to)
          throw NestingViolation("two tasks run on core " + std::to_string(core) + " at once");
    }
    for (auto& v : values_) v.counters.assign(names_.counters.size(), 0);
    finalized_ = true;
  }

  void observe_counter(const MachineEvent& e, std::uint64_t seq) {
    if (e.type != EventType::CounterAdvance) return;
    if (!finalized_) throw MismatchedRun("counter phase before finalize_structure");
    if (e.id >= names_.counters.size())
      throw UnknownCounter("counter index " + std::to_string(e.id) + " has no name");
    auto it = by_core_.find(e.core);
    if (it == by_core_.end()) return;
    const auto& windows = it->second.windows;
    const StreamKey key{e.ts, seq};
    auto w = std::upper_bound(windows.begin(), windows.end(), key,
                              [](const StreamKey& k, const Window& win) { return k < win.from; });
    if (w == windows.begin()) return;
    --w;
    if (key < w->to) values_[w->task].counters[e.id] += e.value;
  }

  GroundTruthLedger finish() const {
    GroundTruthLedger out;
    std::vector<std::size_t> order(tasks_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return tasks_[a].end < tasks_[b].end; });
    using namespace kernel_events;
    for (auto ti : order) {
      const auto& t = tasks_[ti];
      const auto& v = values_[ti];
      TaskRecord r;
      r.task_id = t.index < names_.tasks.size() ? names_.tasks[t.index]
                                                 : "task" + std::to_string(t.index);
      r.begin_ts = t.begin.ts;
      r.end_ts = t.end.ts;
      auto put = [&](std::string_view k, std::int64_t val) { r.values.emplace(std::string(k), val); };
      put(kSchedWaitLen, v.sched_runnable + v.sched_blocked);
      put(kSchedWaitCount, v.sched_count);
      put(kInterruptLen, v.irq_len);
      put(kInterruptCount, v.irq_count);
      put(kFaultLen, v.fault_len);
      put(kFaultCount, v.fault_count);
      put(kRunningLen, v.running);
      put(kMigrationCount, v.migrations);
      put(kSchedRunnableLen, v.sched_runnable);
      put(kSchedBlockedLen, v.sched_blocked);
      for (std::size_t c = 0; c < names_.counters.size(); ++c) put(names_.counters[c], v.counters[c]);
      out.tasks.push_back(std::move(r));
    }
    out.instances.reserve(frames_.size());
    for (std::size_t i = 0; i < frames_.size(); ++i) {
      const auto& f = frames_[i];
      out.instances.push_back({f.id, f.core, f.kind, f.start.ts, f.end.ts, net_[i]});
    }
    std::sort(out.instances.begin(), out.instances.end(),
              [](const InstanceTruth& a, const InstanceTruth& b) { return a.instance < b.instance; });
    return out;
  }

 private:
  struct FrameSpan {
    std::uint64_t id;
    CoreId core;
    FrameKind kind;
    StreamKey start;
    StreamKey end;
  };
  struct Segment {
    CoreId core;
    StreamKey in;
    StreamKey out;
    bool blocked;  // how the segment ended
  };
  struct TaskSpan {
    ThreadId thread;
    std::uint64_t index;
    StreamKey begin;
    StreamKey end;
  };
  struct ThreadLog {
    bool on_core = false;
    std::vector<Segment> segments;
    std::optional<TaskSpan> open_task;
  };
  struct Window {
    StreamKey from;
    StreamKey to;
    std::size_t task;
  };
  struct CoreFrames {
    std::vector<std::size_t> frames;     // all frames, sorted by start
    std::vector<std::size_t> top_level;  // frames not nested in another, sorted
    std::vector<Window> windows;
  };
  struct TaskValues {
    std::int64_t sched_runnable = 0, sched_blocked = 0, sched_count = 0, migrations = 0;
    std::int64_t irq_len = 0, irq_count = 0, fault_len = 0, fault_count = 0, running = 0;
    std::vector<std::int64_t> counters;
  };

  // Sorts a core's frames, checks laminarity and computes net lengths.
  void index_core(CoreFrames& cf) {
    auto& idx = cf.frames;
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return frames_[a].start < frames_[b].start; });
    const std::size_t n = idx.size();
    if (net_.size() < frames_.size()) net_.assign(frames_.size(), 0);

    // Sparse table of maximum end key for range queries.
    std::vector<std::vector<StreamKey>> table(1, std::vector<StreamKey>(n));
    for (std::size_t i = 0; i < n; ++i) table[0][i] = frames_[idx[i]].end;
    for (std::size_t w = 1; (std::size_t{1} << w) <= n; ++w) {
      const std::size_t half = std::size_t{1} << (w - 1);
      table.emplace_back(n - (std::size_t{1} << w) + 1);
      for (std::size_t i = 0; i + (std::size_t{1} << w) <= n; ++i)
        table[w][i] = std::max(table[w - 1][i], table[w - 1][i + half]);
    }
    auto range_max = [&](std::size_t lo, std::size_t hi) {  // inclusive
      std::size_t w = 0;
      while ((std::size_t{2} << w) <= hi - lo + 1) ++w;
      return std::max(table[w][lo], table[w][hi + 1 - (std::size_t{1} << w)]);
    };

    for (std::size_t i = 0; i < n; ++i) {
      const auto& f = frames_[idx[i]];
      // Frames starting inside f occupy positions (i, hi).
      const auto hi = static_cast<std::size_t>(
          std::lower_bound(idx.begin() + static_cast<std::ptrdiff_t>(i) + 1, idx.end(), f.end,
                           [&](std::size_t j, const StreamKey& k) { return frames_[j].start < k; }) -
          idx.begin());
      if (hi > i + 1 && f.end < range_max(i + 1, hi - 1))
        throw NestingViolation("frames " + std::to_string(f.id) + " and a later frame on core " +
                               std::to_string(f.core) + " overlap without nesting");
      Nanos covered = 0;
      StreamKey cover{};
      bool any = false;
      for (std::size_t j = i + 1; j < hi; ++j) {
        const auto& g = frames_[idx[j]];
        if (any && g.start < cover) continue;  // nested in an already counted child
        covered += g.end.ts - g.start.ts;
        cover = g.end;
        any = true;
      }
      net_[idx[i]] = (f.end.ts - f.start.ts) - covered;
    }

    StreamKey cover{};
    bool any = false;
    for (auto i : idx) {
      if (any && frames_[i].start < cover) continue;
      cf.top_level.push_back(i);
      cover = frames_[i].end;
      any = true;
    }
  }

  void account_task(std::size_t ti) {
    const auto& task = tasks_[ti];
    auto& v = values_[ti];
    const auto& segs = threads_.at(task.thread).segments;
    auto first = std::upper_bound(segs.begin(), segs.end(), task.begin,
                                  [](const StreamKey& k, const Segment& s) { return k < s.out; });
    std::optional<StreamKey> prev_out;
    bool prev_blocked = false;
    std::optional<CoreId> prev_core;
    for (auto s = first; s != segs.end() && s->in < task.end; ++s) {
      const StreamKey a = std::max(s->in, task.begin);
      const StreamKey b = std::min(s->out, task.end);
      if (prev_out) {
        const Nanos gap = a.ts - prev_out->ts;
        (prev_blocked ? v.sched_blocked : v.sched_runnable) += gap;
        ++v.sched_count;
        if (*prev_core != s->core) ++v.migrations;
      }
      account_segment(ti, s->core, a, b);
      prev_out = b;
      prev_blocked = s->blocked;
      prev_core = s->core;
    }
  }

  void account_segment(std::size_t ti, CoreId core, StreamKey a, StreamKey b) {
    auto& v = values_[ti];
    auto found = by_core_.find(core);
    if (found == by_core_.end()) {
      v.running += b.ts - a.ts;
      by_core_[core].windows.push_back({a, b, ti});
      return;
    }
    auto& cf = found->second;
    auto start_before = [&](std::size_t i, const StreamKey& k) { return frames_[i].start < k; };

    auto top = std::lower_bound(cf.top_level.begin(), cf.top_level.end(), a, start_before);
    if (top != cf.top_level.begin() && a < frames_[*std::prev(top)].end)
      throw NestingViolation("an interrupt/fault frame spans a context switch or task boundary");
    StreamKey cursor = a;
    for (; top != cf.top_level.end() && frames_[*top].start < b; ++top) {
      const auto& f = frames_[*top];
      if (b < f.end) throw NestingViolation("an interrupt/fault frame spans a context switch or task boundary");
      if (cursor < f.start) cf.windows.push_back({cursor, f.start, ti});
      v.running += f.start.ts - cursor.ts;
      cursor = f.end;
    }
    if (cursor < b) cf.windows.push_back({cursor, b, ti});
    v.running += b.ts - cursor.ts;

    auto all = std::lower_bound(cf.frames.begin(), cf.frames.end(), a, start_before);
    for (; all != cf.frames.end() && frames_[*all].start < b; ++all) {
      if (frames_[*all].kind == FrameKind::Interrupt) {
        v.irq_len += net_[*all];
        ++v.irq_count;
      } else {
        v.fault_len += net_[*all];
        ++v.fault_count;
      }
    }
  }

  std::vector<FrameSpan> frames_;
  std::unordered_map<std::uint64_t, std::size_t> open_frames_;
  std::unordered_set<std::uint64_t> closed_ids_;
  std::unordered_map<ThreadId, ThreadLog> threads_;
  std::vector<TaskSpan> tasks_;
  std::map<CoreId, CoreFrames> by_core_;
  std::vector<Nanos> net_;
  std::vector<TaskValues> values_;
  StreamNames names_;
  bool finalized_ = false;
};

/// One-shot oracle over an in-memory stream.
inline GroundTruthLedger ledger_oracle(std::span<const MachineEvent> events, const StreamNames& names) {
  LedgerOracle oracle;
  for (std::size_t i = 0; i < events.size(); ++i) oracle.observe_structure(events[i], i);
  oracle.finalize_structure(names);
  for (std::size_t i = 0; i < events.size(); ++i) oracle.observe_counter(events[i], i);
  return oracle.finish();
}

inline GroundTruthLedger ledger_oracle(const SimTrace& trace) {
  return ledger_oracle(trace.events, trace.names);
}

}  // namespace tailvar::sim
