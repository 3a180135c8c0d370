// Copyright 2026 The tailvar Authors
// SPDX-License-Identifier: Apache-2.0

// Deterministic discrete-event model of a multi-core machine.
//
// The machine produces the event stream a kernel tracer would observe:
// context switches, properly nested interrupt and fault frames, synthetic
// CPU counter ticks, and the begin/end calls of application tasks.
//
// Ordering contract for events sharing a timestamp on one core: all state
// changes are emitted first, then that timestamp's counter ticks. A tick at
// time t is therefore attributed to whatever runs on the core after every
// transition at t has been applied.

#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "tailvar/common.hpp"
#include "tailvar/trace_model.hpp"

namespace tailvar::sim {

enum class EventType : std::uint8_t {
  TaskBegin,
  TaskEnd,
  SchedIn,
  SchedOut,
  InterruptStart,
  InterruptEnd,
  FaultStart,
  FaultEnd,
  CounterAdvance,
};

inline std::string_view to_string(EventType t) {
  switch (t) {
    case EventType::TaskBegin: return "TaskBegin";
    case EventType::TaskEnd: return "TaskEnd";
    case EventType::SchedIn: return "SchedIn";
    case EventType::SchedOut: return "SchedOut";
    case EventType::InterruptStart: return "InterruptStart";
    case EventType::InterruptEnd: return "InterruptEnd";
    case EventType::FaultStart: return "FaultStart";
    case EventType::FaultEnd: return "FaultEnd";
    case EventType::CounterAdvance: return "CounterAdvance";
  }
  return "?";
}

enum class FrameKind : std::uint8_t { Interrupt, Fault };

inline bool is_frame_start(EventType t) {
  return t == EventType::InterruptStart || t == EventType::FaultStart;
}
inline bool is_frame_end(EventType t) {
  return t == EventType::InterruptEnd || t == EventType::FaultEnd;
}
inline FrameKind frame_kind(EventType t) {
  return (t == EventType::FaultStart || t == EventType::FaultEnd) ? FrameKind::Fault
                                                                   : FrameKind::Interrupt;
}

/// One observed machine event.
///
/// `id` is the thread for Task/Sched events, the instance number for frame
/// events and the counter index for CounterAdvance. `value` is the task index
/// for Task events, 1 for a blocking SchedOut (0 when preempted) and the
/// delta for CounterAdvance.
struct MachineEvent {
  Nanos ts = 0;
  CoreId core = 0;
  EventType type = EventType::CounterAdvance;
  std::uint64_t id = 0;
  std::int64_t value = 0;

  friend bool operator==(const MachineEvent&, const MachineEvent&) = default;
};

/// Length distribution in nanoseconds.
struct LengthDist {
  enum class Kind : std::uint8_t { Fixed, Uniform, Exponential };
  Kind kind = Kind::Fixed;
  Nanos a = 0;  // Fixed: value. Uniform: lower bound. Exponential: minimum.
  Nanos b = 0;  // Uniform: upper bound. Exponential: mean of the excess.

  static LengthDist fixed(Nanos v) { return {Kind::Fixed, v, v}; }
  static LengthDist uniform(Nanos lo, Nanos hi) { return {Kind::Uniform, lo, hi}; }
  static LengthDist exponential(Nanos min, Nanos mean_excess) {
    return {Kind::Exponential, min, mean_excess};
  }

  Nanos sample(Rng& rng) const {
    switch (kind) {
      case Kind::Fixed: return a;
      case Kind::Uniform: return rng.between(a, b);
      case Kind::Exponential:
        return a + static_cast<Nanos>(std::llround(rng.exponential(static_cast<double>(b))));
    }
    return a;
  }

  Nanos min_value() const { return a; }
};

/// Batch arrival process: batches arrive as a Poisson process and each holds
/// a geometric number of events (mean = burstiness), so the long-run rate is
/// `rate` whatever the burstiness. With phase_length > 0 the burstiness is
/// redrawn per phase uniformly from [burstiness, burstiness_max].
struct ArrivalModel {
  double rate = 0;          // events per second
  double burstiness = 1.0;  // mean batch size
  double burstiness_max = 0;
  Nanos phase_length = 0;
  Nanos batch_spread = 200;  // max gap between members of one batch
  LengthDist length = LengthDist::fixed(1000);
};

/// Per-tick counter deltas by execution context.
struct CounterModel {
  std::string event;  // catalog name, e.g. "ctr.INST_RETIRED.ANY"
  std::int64_t task_delta = 0;
  std::int64_t task_jitter = 0;
  std::int64_t kernel_delta = 0;  // inside an interrupt or fault frame
};

struct SchedulerConfig {
  Nanos quantum = 4 * kMilli;
  Nanos jitter = 0;  // quantum drawn from [quantum - jitter, quantum + jitter]
};

struct MachineConfig {
  std::uint32_t cores = 1;
  std::uint64_t seed = 1;
  Nanos counter_tick = 100;
  std::vector<CounterModel> counters;
  ArrivalModel interrupts;
  ArrivalModel faults;  // rate is per second of task running time
  SchedulerConfig scheduler;
  std::uint32_t max_nesting = 4;
  ThreadId thread_id_base = 1;

  void validate() const {
    if (cores < 1) throw ConfigError("cores must be >= 1");
    if (counter_tick < 1) throw ConfigError("counter_tick must be >= 1");
    if (max_nesting < 1) throw ConfigError("max_nesting must be >= 1");
    if (scheduler.quantum < 1) throw ConfigError("quantum must be >= 1");
    if (scheduler.jitter < 0 || scheduler.jitter >= scheduler.quantum)
      throw ConfigError("quantum jitter must be in [0, quantum)");
    auto check_arrivals = [](const ArrivalModel& m, std::string_view what) {
      const std::string w(what);
      if (!(m.rate >= 0)) throw ConfigError(w + " rate must be >= 0");
      if (!(m.burstiness >= 1)) throw ConfigError(w + " burstiness must be >= 1");
      if (m.phase_length < 0) throw ConfigError(w + " phase_length must be >= 0");
      if (m.burstiness_max != 0 && m.burstiness_max < m.burstiness)
        throw ConfigError(w + " burstiness_max must be >= burstiness");
      if (m.batch_spread < 0) throw ConfigError(w + " batch_spread must be >= 0");
      check_length(m.length, w + " length");
    };
    check_arrivals(interrupts, "interrupt");
    check_arrivals(faults, "fault");
    for (const auto& c : counters) {
      if (c.event.empty()) throw ConfigError("counter model without event name");
      if (c.task_delta < 0 || c.task_jitter < 0 || c.kernel_delta < 0)
        throw ConfigError("counter '" + c.event + "': deltas must be >= 0");
    }
  }

  static void check_length(const LengthDist& d, const std::string& what) {
    if (d.a < 1) throw ConfigError(what + ": lengths must be >= 1 ns");
    if (d.kind == LengthDist::Kind::Uniform && d.b < d.a)
      throw ConfigError(what + ": uniform upper bound below lower bound");
    if (d.kind == LengthDist::Kind::Exponential && d.b < 0)
      throw ConfigError(what + ": negative exponential mean");
  }
};

struct ThreadGroup {
  std::string task_prefix = "task";
  std::uint32_t threads = 1;
  LengthDist work = LengthDist::fixed(50 * kMicro);
  // Gap between the end of one task and the next arrival on the thread. A
  // zero gap starts the next task immediately without leaving the core.
  LengthDist think{LengthDist::Kind::Fixed, 0, 0};
};

/// A synthetic cause injected into a fraction of tasks.
///
/// Kernel events inject a frame (interrupt_len, fault_len) or a blocking wait
/// (sched_wait_len) of `magnitude` ns. A CPU counter adds `magnitude` ns of
/// extra work and multiplies that counter's per-tick delta by
/// `counter_boost` for the whole task.
struct PlantedCause {
  std::string event;
  double fraction = 0.01;
  Nanos magnitude = 0;
  double counter_boost = 1.0;
  Nanos active_from = 0;  // only tasks created inside [active_from, active_until)
  Nanos active_until = std::numeric_limits<Nanos>::max();
};

struct WorkloadScenario {
  std::string name = "scenario";
  std::vector<ThreadGroup> groups;
  std::vector<PlantedCause> planted;

  void validate(const MachineConfig& machine) const {
    if (groups.empty()) throw ConfigError("scenario '" + name + "' has no thread groups");
    for (const auto& g : groups) {
      if (g.threads < 1) throw ConfigError("thread group with zero threads");
      MachineConfig::check_length(g.work, "task work");
      if (g.think.a < 0) throw ConfigError("think time must be >= 0");
      if (!is_valid_task_id(g.task_prefix + "0")) throw ConfigError("invalid task prefix");
    }
    for (const auto& p : planted) {
      if (!(p.fraction >= 0 && p.fraction <= 1)) throw ConfigError("planted fraction must be in [0, 1]");
      if (p.magnitude < 0) throw ConfigError("planted magnitude must be >= 0");
      if (!(p.counter_boost >= 0)) throw ConfigError("counter boost must be >= 0");
      using namespace kernel_events;
      const bool kernel = p.event == kInterruptLen || p.event == kFaultLen || p.event == kSchedWaitLen;
      const bool counter = std::any_of(machine.counters.begin(), machine.counters.end(),
                                       [&](const CounterModel& c) { return c.event == p.event; });
      if (!kernel && !counter)
        throw ConfigError("planted event '" + p.event +
                          "' is neither interrupt_len/fault_len/sched_wait_len nor a modelled counter");
      if (kernel && p.magnitude < 1) throw ConfigError("planted kernel cause needs magnitude >= 1");
    }
  }
};

/// Names that give meaning to the integer ids carried by MachineEvent.
struct StreamNames {
  std::vector<std::string> tasks;     // indexed by TaskBegin/TaskEnd value
  std::vector<std::string> counters;  // indexed by CounterAdvance id
};

struct SimTrace {
  std::vector<MachineEvent> events;
  StreamNames names;
};

/// Writes one event per line: `ts core type id value [name]`.
inline void dump_events(std::ostream& out, const std::vector<MachineEvent>& events,
                        const StreamNames& names) {
  for (const auto& e : events) {
    out << e.ts << ' ' << e.core << ' ' << to_string(e.type) << ' ' << e.id << ' ' << e.value;
    if ((e.type == EventType::TaskBegin || e.type == EventType::TaskEnd) &&
        static_cast<std::size_t>(e.value) < names.tasks.size())
      out << ' ' << names.tasks[static_cast<std::size_t>(e.value)];
    if (e.type == EventType::CounterAdvance && e.id < names.counters.size())
      out << ' ' << names.counters[e.id];
    out << '\n';
  }
}

using EventSink = std::function<void(const MachineEvent&)>;

/// The simulator. One instance performs one run; all randomness derives from
/// `MachineConfig::seed`.
class Machine {
 public:
  Machine(MachineConfig config, WorkloadScenario scenario)
      : config_(std::move(config)), scenario_(std::move(scenario)) {
    config_.validate();
    scenario_.validate(config_);
    for (const auto& c : config_.counters) names_.counters.push_back(c.event);
  }

  /// Runs for `duration` ns, streaming events to `sink`. Frames still open
  /// at the end are drained (their End events are emitted) so every core's
  /// nesting returns to zero; tasks still in flight produce no TaskEnd.
  void run(Nanos duration, const EventSink& sink) {
    if (duration <= 0) throw ConfigError("duration must be > 0");
    reset();
    sink_ = &sink;
    duration_ = duration;
    Nanos now = 0;
    while (true) {
      settle(now);
      if (!draining_ && now % config_.counter_tick == 0) emit_ticks(now);
      Nanos next = next_time(now);
      if (!draining_ && next > duration_) {
        draining_ = true;
        next = next_time(now);
      }
      if (next == kNever) break;
      advance(next - now);
      now = next;
    }
    sink_ = nullptr;
  }

  SimTrace run(Nanos duration) {
    SimTrace out;
    run(duration, [&](const MachineEvent& e) { out.events.push_back(e); });
    out.names = names_;
    return out;
  }

  /// Names valid after run(); task names grow as tasks are created.
  const StreamNames& names() const { return names_; }
  const MachineConfig& config() const { return config_; }
  const WorkloadScenario& scenario() const { return scenario_; }

 private:
  static constexpr Nanos kNever = std::numeric_limits<Nanos>::max();

  enum class PointKind : std::uint8_t { Fault, Interrupt, Block };
  struct Point {
    Nanos offset;
    PointKind kind;
    Nanos length;
  };
  struct Task {
    std::uint64_t index = 0;
    Nanos work_total = 0;
    Nanos work_done = 0;
    std::vector<Point> points;
    std::size_t next_point = 0;
    std::vector<double> boost;  // per counter, empty when no boost applies
  };
  struct Frame {
    FrameKind kind;
    std::uint64_t instance;
    Nanos remaining;
  };
  struct PendingIrq {
    Nanos at;
    Nanos length;
  };
  enum class ThreadState : std::uint8_t { Blocked, Runnable, Running };
  struct Thread {
    ThreadId id = 0;
    std::size_t group = 0;
    ThreadState state = ThreadState::Blocked;
    Nanos wake_at = 0;
    std::optional<Task> task;
    std::uint64_t tasks_started = 0;
    Rng rng{0};
  };
  struct Core {
    std::vector<Frame> stack;
    std::optional<std::size_t> running;  // index into threads_
    Nanos quantum_end = 0;
    std::deque<PendingIrq> irqs;
    Nanos next_batch = 0;
    Rng rng{0};
  };

  void reset() {
    names_.tasks.clear();
    threads_.clear();
    cores_.clear();
    run_queue_.clear();
    next_instance_ = 0;
    draining_ = false;
    sched_rng_ = Rng(config_.seed, 1);
    tick_rng_ = Rng(config_.seed, 2);
    ThreadId tid = config_.thread_id_base;
    for (std::size_t g = 0; g < scenario_.groups.size(); ++g) {
      for (std::uint32_t i = 0; i < scenario_.groups[g].threads; ++i) {
        Thread t;
        t.id = tid++;
        t.group = g;
        t.rng = Rng(config_.seed, 1000 + t.id);
        t.state = ThreadState::Blocked;
        t.wake_at = scenario_.groups[g].think.sample(t.rng);
        threads_.push_back(std::move(t));
      }
    }
    cores_.resize(config_.cores);
    for (CoreId c = 0; c < config_.cores; ++c) {
      cores_[c].rng = Rng(config_.seed, 100 + c);
      cores_[c].next_batch = first_batch_time(cores_[c]);
    }
  }

  void emit(Nanos ts, CoreId core, EventType type, std::uint64_t id, std::int64_t value = 0) {
    (*sink_)(MachineEvent{ts, core, type, id, value});
  }

  // --- interrupt arrivals ------------------------------------------------

  double burstiness_at(Nanos t) const {
    const auto& m = config_.interrupts;
    if (m.phase_length <= 0 || m.burstiness_max <= m.burstiness) return m.burstiness;
    const auto phase = static_cast<std::uint64_t>(t / m.phase_length);
    const double u = unit_interval(mix64(config_.seed ^ mix64(phase + 0x5bd1e995ULL)));
    return m.burstiness + u * (m.burstiness_max - m.burstiness);
  }

  Nanos batch_gap(Core& core, double burstiness) const {
    const double mean_gap = 1e9 * burstiness / config_.interrupts.rate;
    return 1 + static_cast<Nanos>(std::llround(core.rng.exponential(mean_gap)));
  }

  Nanos first_batch_time(Core& core) const {
    if (config_.interrupts.rate <= 0) return kNever;
    return batch_gap(core, burstiness_at(0));
  }

  void refill_irqs(Core& core) {
    if (!core.irqs.empty() || core.next_batch == kNever) return;
    const auto& m = config_.interrupts;
    const double burst = burstiness_at(core.next_batch);
    const auto size = core.rng.geometric(burst);
    Nanos t = core.next_batch;
    for (std::uint64_t i = 0; i < size; ++i) {
      if (i > 0) t += core.rng.between(0, m.batch_spread);
      core.irqs.push_back({t, m.length.sample(core.rng)});
    }
    core.next_batch = t + batch_gap(core, burst);
  }

  // --- tasks ---------------------------------------------------------------

  Task make_task(Thread& th, Nanos now) {
    const auto& group = scenario_.groups[th.group];
    Task task;
    task.index = names_.tasks.size();
    names_.tasks.push_back(group.task_prefix + std::to_string(th.id) + "." +
                           std::to_string(th.tasks_started++));
    task.work_total = group.work.sample(th.rng);

    for (const auto& p : scenario_.planted) {
      const bool active = now >= p.active_from && now < p.active_until;
      if (!th.rng.chance(p.fraction) || !active) continue;
      using namespace kernel_events;
      const Nanos offset = th.rng.between(0, task.work_total - 1);
      if (p.event == kInterruptLen) {
        task.points.push_back({offset, PointKind::Interrupt, p.magnitude});
      } else if (p.event == kFaultLen) {
        task.points.push_back({offset, PointKind::Fault, p.magnitude});
      } else if (p.event == kSchedWaitLen) {
        task.points.push_back({offset, PointKind::Block, p.magnitude});
      } else {
        task.work_total += p.magnitude;
        if (task.boost.empty()) task.boost.assign(config_.counters.size(), 1.0);
        for (std::size_t c = 0; c < config_.counters.size(); ++c)
          if (config_.counters[c].event == p.event) task.boost[c] *= p.counter_boost;
      }
    }

    const auto& fm = config_.faults;
    if (fm.rate > 0) {
      const double mean_gap = 1e9 * fm.burstiness / fm.rate;
      Nanos at = static_cast<Nanos>(std::llround(th.rng.exponential(mean_gap)));
      while (at < task.work_total) {
        const auto size = th.rng.geometric(fm.burstiness);
        for (std::uint64_t i = 0; i < size; ++i)
          task.points.push_back({at, PointKind::Fault, fm.length.sample(th.rng)});
        at += 1 + static_cast<Nanos>(std::llround(th.rng.exponential(mean_gap)));
      }
    }
    std::stable_sort(task.points.begin(), task.points.end(),
                     [](const Point& a, const Point& b) { return a.offset < b.offset; });
    return task;
  }

  Nanos draw_quantum() {
    const auto& s = config_.scheduler;
    return s.quantum + sched_rng_.between(-s.jitter, s.jitter);
  }

  void push_frame(Core& core, CoreId c, FrameKind kind, Nanos length, Nanos now) {
    const auto instance = next_instance_++;
    core.stack.push_back({kind, instance, length});
    emit(now, c, kind == FrameKind::Fault ? EventType::FaultStart : EventType::InterruptStart,
         instance);
  }

  void block_running(Core& core, CoreId c, Thread& th, Nanos now, Nanos wake_at) {
    emit(now, c, EventType::SchedOut, th.id, 1);
    th.state = ThreadState::Blocked;
    th.wake_at = wake_at;
    core.running.reset();
  }

  // Applies every state change due at `now` until nothing more changes.
  void settle(Nanos now) {
    bool changed = true;
    while (changed) {
      changed = false;
      if (!draining_) {
        for (std::size_t i = 0; i < threads_.size(); ++i) {
          auto& th = threads_[i];
          if (th.state == ThreadState::Blocked && th.wake_at <= now) {
            th.state = ThreadState::Runnable;
            run_queue_.push_back(i);
            changed = true;
          }
        }
      }
      for (CoreId c = 0; c < cores_.size(); ++c) changed |= settle_core(c, now);
    }
  }

  bool settle_core(CoreId c, Nanos now) {
    auto& core = cores_[c];
    bool changed = false;
    while (!core.stack.empty() && core.stack.back().remaining == 0) {
      const auto f = core.stack.back();
      core.stack.pop_back();
      emit(now, c, f.kind == FrameKind::Fault ? EventType::FaultEnd : EventType::InterruptEnd,
           f.instance);
      changed = true;
    }
    if (draining_) return changed;

    refill_irqs(core);
    while (!core.irqs.empty() && core.irqs.front().at <= now &&
           core.stack.size() < config_.max_nesting) {
      push_frame(core, c, FrameKind::Interrupt, core.irqs.front().length, now);
      core.irqs.pop_front();
      refill_irqs(core);
      changed = true;
    }
    if (!core.stack.empty()) return changed;

    if (core.running) {
      auto& th = threads_[*core.running];
      auto& task = *th.task;
      if (task.next_point < task.points.size() &&
          task.work_done >= task.points[task.next_point].offset) {
        const auto p = task.points[task.next_point++];
        if (p.kind == PointKind::Block)
          block_running(core, c, th, now, now + p.length);
        else
          push_frame(core, c, p.kind == PointKind::Fault ? FrameKind::Fault : FrameKind::Interrupt,
                     p.length, now);
        return true;
      }
      if (task.work_done >= task.work_total) {
        emit(now, c, EventType::TaskEnd, th.id, static_cast<std::int64_t>(task.index));
        th.task.reset();
        const Nanos gap = scenario_.groups[th.group].think.sample(th.rng);
        if (gap == 0) {
          th.task = make_task(th, now);
          emit(now, c, EventType::TaskBegin, th.id, static_cast<std::int64_t>(th.task->index));
        } else {
          block_running(core, c, th, now, now + gap);
        }
        return true;
      }
      if (now >= core.quantum_end) {
        if (!run_queue_.empty()) {
          emit(now, c, EventType::SchedOut, th.id, 0);
          th.state = ThreadState::Runnable;
          run_queue_.push_back(*core.running);
          core.running.reset();
          changed = true;
        } else {
          core.quantum_end = now + draw_quantum();
        }
      }
    }

    if (!core.running && !run_queue_.empty()) {
      const auto idx = run_queue_.front();
      run_queue_.pop_front();
      auto& th = threads_[idx];
      th.state = ThreadState::Running;
      core.running = idx;
      core.quantum_end = now + draw_quantum();
      emit(now, c, EventType::SchedIn, th.id);
      if (!th.task) {
        th.task = make_task(th, now);
        emit(now, c, EventType::TaskBegin, th.id, static_cast<std::int64_t>(th.task->index));
      }
      changed = true;
    }
    return changed;
  }

  void emit_ticks(Nanos now) {
    for (CoreId c = 0; c < cores_.size(); ++c) {
      const auto& core = cores_[c];
      if (!core.stack.empty()) {
        for (std::size_t i = 0; i < config_.counters.size(); ++i)
          if (config_.counters[i].kernel_delta > 0)
            emit(now, c, EventType::CounterAdvance, i, config_.counters[i].kernel_delta);
      } else if (core.running) {
        const auto& task = *threads_[*core.running].task;
        for (std::size_t i = 0; i < config_.counters.size(); ++i) {
          const auto& m = config_.counters[i];
          std::int64_t d = m.task_delta + tick_rng_.between(-m.task_jitter, m.task_jitter);
          if (!task.boost.empty())
            d = static_cast<std::int64_t>(std::llround(static_cast<double>(d) * task.boost[i]));
          if (d > 0) emit(now, c, EventType::CounterAdvance, i, d);
        }
      }
    }
  }

  Nanos next_time(Nanos now) const {
    Nanos next = kNever;
    auto consider = [&](Nanos t) {
      if (t > now && t < next) next = t;
    };
    if (!draining_) consider((now / config_.counter_tick + 1) * config_.counter_tick);
    for (const auto& core : cores_) {
      if (!core.stack.empty()) consider(now + core.stack.back().remaining);
      if (draining_) continue;
      if (!core.irqs.empty() && core.stack.size() < config_.max_nesting)
        consider(core.irqs.front().at);
      if (core.stack.empty() && core.running) {
        const auto& task = *threads_[*core.running].task;
        Nanos until = task.work_total - task.work_done;
        if (task.next_point < task.points.size())
          until = std::min(until, task.points[task.next_point].offset - task.work_done);
        consider(now + until);
        if (!run_queue_.empty()) consider(core.quantum_end);
      }
    }
    if (!draining_)
      for (const auto& th : threads_)
        if (th.state == ThreadState::Blocked) consider(th.wake_at);
    return next;
  }

  void advance(Nanos dt) {
    for (auto& core : cores_) {
      if (!core.stack.empty()) {
        core.stack.back().remaining -= dt;
      } else if (core.running && !draining_) {
        threads_[*core.running].task->work_done += dt;
      }
    }
  }

  MachineConfig config_;
  WorkloadScenario scenario_;
  StreamNames names_;
  std::vector<Thread> threads_;
  std::vector<Core> cores_;
  std::deque<std::size_t> run_queue_;
  std::uint64_t next_instance_ = 0;
  bool draining_ = false;
  Nanos duration_ = 0;
  Rng sched_rng_{0};
  Rng tick_rng_{0};
  const EventSink* sink_ = nullptr;
};

}  // namespace tailvar::sim
