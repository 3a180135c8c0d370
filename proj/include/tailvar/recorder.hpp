// Copyright 2026 The tailvar Authors
// SPDX-License-Identifier: Apache-2.0

// Online per-task recording.
//
// Each thread carries a context (TCM) holding the cumulative values of the
// AppTask it is running; each core carries a context (CCM) naming the thread
// on it, a copy of that thread's recording flag, and a shadow stack of the
// interrupt and fault frames currently open on the core. All updates happen
// at event boundaries, so the per-event cost is constant and an unrecorded
// task costs only flag updates.

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tailvar/common.hpp"
#include "tailvar/sim/machine.hpp"
#include "tailvar/trace_model.hpp"

namespace tailvar {

using sim::FrameKind;

struct FrameResult {
  FrameKind kind = FrameKind::Interrupt;
  Nanos total = 0;   // exit - entry
  Nanos actual = 0;  // total minus time spent in frames that preempted it
};

/// Per-core mirror of the kernel's interrupt nesting.
class ShadowStack {
 public:
  struct Frame {
    Nanos start_time;
    Nanos preempted_length;
    FrameKind kind;
  };

  void push(Nanos now, FrameKind kind) { frames_.push_back({now, 0, kind}); }

  /// Pops the innermost frame. Its whole span counts as preemption of the
  /// frame below it, whose own nested time is already excluded from `total`.
  FrameResult pop(Nanos now) {
    if (frames_.empty()) throw EmptyStackPop("interrupt/fault exit with no open frame");
    const Frame f = frames_.back();
    frames_.pop_back();
    FrameResult r{f.kind, now - f.start_time, 0};
    r.actual = r.total - f.preempted_length;
    if (!frames_.empty()) frames_.back().preempted_length += r.total;
    return r;
  }

  std::size_t depth() const { return frames_.size(); }
  bool empty() const { return frames_.empty(); }
  const Frame& top() const { return frames_.back(); }

 private:
  std::vector<Frame> frames_;
};

/// The CPU counters enabled for one epoch. `slot_of` maps a catalog index to
/// its position in a thread's counter vector, or -1 when disabled.
struct EnabledSet {
  std::uint64_t epoch = 0;
  std::vector<std::size_t> events;  // catalog indices, sorted
  std::vector<int> slot_of;

  int slot(std::size_t catalog_index) const {
    return catalog_index < slot_of.size() ? slot_of[catalog_index] : -1;
  }
};

/// Fixed counters plus a uniform sample of configurable ones, drawn from a
/// generator seeded by (seed, epoch) so any epoch's set can be recomputed.
inline EnabledSet select_epoch_counters(const EventCatalog& catalog, std::uint64_t seed,
                                        std::uint64_t epoch) {
  EnabledSet set;
  set.epoch = epoch;
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    const auto& e = catalog.at(i);
    if (e.fixed) set.events.push_back(i);
    if (e.configurable) pool.push_back(i);
  }
  Rng rng(seed, 0x45504f4348ULL + epoch);
  const std::size_t k = std::min(catalog.configurable_slots(), pool.size());
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
    set.events.push_back(pool[i]);
  }
  std::sort(set.events.begin(), set.events.end());
  set.slot_of.assign(catalog.size(), -1);
  for (std::size_t s = 0; s < set.events.size(); ++s) set.slot_of[set.events[s]] = static_cast<int>(s);
  return set;
}

/// Kernel values kept per thread, in record order.
enum KernelSlot : std::size_t {
  kSchedWaitLenSlot,
  kSchedWaitCountSlot,
  kInterruptLenSlot,
  kInterruptCountSlot,
  kFaultLenSlot,
  kFaultCountSlot,
  kRunningLenSlot,
  kMigrationCountSlot,
  kSchedRunnableLenSlot,
  kSchedBlockedLenSlot,
  kKernelSlots,
};

struct ThreadContext {
  bool recording = false;
  std::string task_id;
  Nanos begin_ts = 0;
  std::array<std::int64_t, kKernelSlots> kernel{};
  std::vector<std::int64_t> counters;
  std::shared_ptr<const EnabledSet> enabled;
  std::optional<Nanos> last_wait_time;
  bool last_wait_blocked = false;
  std::optional<Nanos> running_since;  // open "running" window
  CoreId last_core = 0;
};

/// Thread contexts in blocks of 64K ids, allocated the first time a thread
/// in the block records a task.
class TcmStore {
 public:
  static constexpr std::size_t kBlockSpan = 1 << 16;

  ThreadContext* find(ThreadId t) {
    const std::size_t b = t / kBlockSpan;
    if (b >= blocks_.size() || !blocks_[b]) return nullptr;
    return &(*blocks_[b])[t % kBlockSpan];
  }

  ThreadContext& acquire(ThreadId t) {
    const std::size_t b = t / kBlockSpan;
    if (b >= blocks_.size()) blocks_.resize(b + 1);
    if (!blocks_[b]) {
      blocks_[b] = std::make_unique<std::vector<ThreadContext>>(kBlockSpan);
      ++allocated_;
    }
    return (*blocks_[b])[t % kBlockSpan];
  }

  std::size_t blocks_allocated() const { return allocated_; }

 private:
  std::vector<std::unique_ptr<std::vector<ThreadContext>>> blocks_;
  std::size_t allocated_ = 0;
};

struct CoreContext {
  std::optional<ThreadId> running_thread;
  bool recording = false;
  ThreadContext* tcm = nullptr;  // running thread's context while recording
  ShadowStack stack;
};

struct RecorderConfig {
  double selection_rate = 1.0;
  Nanos epoch_length = kSecond;
  std::uint64_t seed = 1;
  // Record sched_runnable_len and sched_blocked_len next to sched_wait_len.
  bool split_wait_states = false;
  bool keep_epoch_history = true;
  // Replaces the default seeded selector: (task serial, task id) -> record?
  std::function<bool(std::uint64_t, std::string_view)> selector;

  void validate() const {
    if (!(selection_rate >= 0 && selection_rate <= 1))
      throw ConfigError("selection_rate must be in [0, 1]");
    if (epoch_length < 1) throw ConfigError("epoch_length must be >= 1 ns");
  }
};

struct RecorderStats {
  std::uint64_t tasks_seen = 0;
  std::uint64_t records_emitted = 0;
  std::uint64_t bytes_written = 0;
  std::uint64_t epochs = 0;
  // Writes to per-task values (counters, lengths, wait/window timestamps).
  std::uint64_t value_writes = 0;
  // Writes to recording flags, running-thread ids and task bookkeeping.
  std::uint64_t flag_writes = 0;
  std::vector<std::pair<std::uint64_t, std::vector<std::string>>> epoch_history;
};

class Recorder {
 public:
  Recorder(EventCatalog catalog, RecorderConfig config)
      : catalog_(std::move(catalog)), config_(std::move(config)) {
    config_.validate();
    catalog_.validate();
    is_counter_.resize(catalog_.size());
    for (std::size_t i = 0; i < catalog_.size(); ++i)
      is_counter_[i] = catalog_.at(i).kind == EventKind::CpuCounter;
    start_epoch(0);
  }

  /// Every encoded record is also written here, one line each.
  void set_trace_sink(std::ostream* out) { sink_ = out; }

  void epoch_tick(Nanos now) {
    const auto epoch = static_cast<std::uint64_t>(now / config_.epoch_length);
    if (epoch != enabled_->epoch) start_epoch(epoch);
  }

  void begin_app_task(ThreadId thread, CoreId core, std::string_view task_id, Nanos now) {
    if (unselected_.count(thread)) throw NestedTaskOnThread(nested_message(thread, task_id));
    if (auto* t = tcms_.find(thread); t && t->recording)
      throw NestedTaskOnThread(nested_message(thread, task_id));
    auto& cc = core_ctx(core);
    if (!cc.stack.empty()) throw ContextSwitchInInterrupt("task begins inside an interrupt/fault frame");
    if (cc.running_thread && *cc.running_thread != thread)
      throw NestingViolation("task begins on thread " + std::to_string(thread) + " but core " +
                             std::to_string(core) + " runs another thread");
    if (!cc.running_thread) {
      cc.running_thread = thread;
      ++stats_.flag_writes;
    }

    const std::uint64_t serial = stats_.tasks_seen++;
    if (!selected(serial, task_id)) {
      unselected_.emplace(thread, std::string(task_id));
      ++stats_.flag_writes;
      return;
    }
    auto& t = tcms_.acquire(thread);
    t.recording = true;
    t.task_id = std::string(task_id);
    t.begin_ts = now;
    t.kernel.fill(0);
    t.enabled = enabled_;
    t.counters.assign(enabled_->events.size(), 0);
    t.last_wait_time.reset();
    t.running_since = now;
    t.last_core = core;
    cc.recording = true;
    cc.tcm = &t;
    stats_.flag_writes += 2;
    stats_.value_writes += 1;
  }

  std::optional<TaskRecord> end_app_task(ThreadId thread, CoreId core, std::string_view task_id,
                                         Nanos now) {
    if (auto it = unselected_.find(thread); it != unselected_.end()) {
      if (it->second != task_id) throw UnmatchedEnd(unmatched_message(thread, task_id));
      unselected_.erase(it);
      ++stats_.flag_writes;
      return std::nullopt;
    }
    auto* t = tcms_.find(thread);
    if (!t || !t->recording || t->task_id != task_id)
      throw UnmatchedEnd(unmatched_message(thread, task_id));
    auto& cc = core_ctx(core);
    if (!cc.stack.empty()) throw ContextSwitchInInterrupt("task ends inside an interrupt/fault frame");
    close_window(*t, now);

    TaskRecord r;
    r.task_id = std::move(t->task_id);
    r.begin_ts = t->begin_ts;
    r.end_ts = now;
    using namespace kernel_events;
    static constexpr std::string_view kNames[kKernelSlots] = {
        kSchedWaitLen, kSchedWaitCount, kInterruptLen, kInterruptCount,     kFaultLen,
        kFaultCount,   kRunningLen,     kMigrationCount, kSchedRunnableLen, kSchedBlockedLen};
    const std::size_t kernel_count = config_.split_wait_states ? kKernelSlots : kSchedRunnableLenSlot;
    for (std::size_t k = 0; k < kernel_count; ++k) r.values.emplace(std::string(kNames[k]), t->kernel[k]);
    for (std::size_t s = 0; s < t->enabled->events.size(); ++s)
      r.values.emplace(catalog_.at(t->enabled->events[s]).name, t->counters[s]);

    t->recording = false;
    t->task_id.clear();
    t->enabled.reset();
    if (cc.running_thread == thread) {
      cc.recording = false;
      cc.tcm = nullptr;
    }
    stats_.flag_writes += 2;

    ++stats_.records_emitted;
    const std::string line = encode_record(r);
    stats_.bytes_written += line.size();
    if (sink_) *sink_ << line;
    return r;
  }

  void on_sched_out(ThreadId thread, CoreId core, Nanos now, bool blocked = true) {
    auto& cc = core_ctx(core);
    if (!cc.stack.empty()) throw ContextSwitchInInterrupt("context switch with open interrupt/fault frames");
    if (cc.running_thread != thread)
      throw NestingViolation("thread " + std::to_string(thread) + " scheduled out of core " +
                             std::to_string(core) + " it is not running on");
    if (cc.recording) {
      auto& t = *cc.tcm;
      close_window(t, now);
      t.last_wait_time = now;
      t.last_wait_blocked = blocked;
      t.last_core = core;
      stats_.value_writes += 1;
    }
    cc.running_thread.reset();
    cc.recording = false;
    cc.tcm = nullptr;
    stats_.flag_writes += 2;
  }

  void on_sched_in(ThreadId thread, CoreId core, Nanos now) {
    auto& cc = core_ctx(core);
    if (!cc.stack.empty()) throw ContextSwitchInInterrupt("context switch with open interrupt/fault frames");
    if (cc.running_thread)
      throw NestingViolation("core " + std::to_string(core) + " already runs a thread");
    cc.running_thread = thread;
    auto* t = tcms_.find(thread);
    cc.recording = t && t->recording;
    cc.tcm = cc.recording ? t : nullptr;
    stats_.flag_writes += 2;
    if (!cc.recording) return;
    if (t->last_wait_time) {
      const Nanos wait = now - *t->last_wait_time;
      t->kernel[kSchedWaitLenSlot] += wait;
      t->kernel[t->last_wait_blocked ? kSchedBlockedLenSlot : kSchedRunnableLenSlot] += wait;
      ++t->kernel[kSchedWaitCountSlot];
      if (t->last_core != core) ++t->kernel[kMigrationCountSlot];
      t->last_wait_time.reset();
      stats_.value_writes += 4;
    }
    t->running_since = now;
    t->last_core = core;
    stats_.value_writes += 1;
  }

  void on_irq_enter(CoreId core, Nanos now, FrameKind kind = FrameKind::Interrupt) {
    auto& cc = core_ctx(core);
    if (cc.recording && cc.stack.empty()) close_window(*cc.tcm, now);
    cc.stack.push(now, kind);
  }

  FrameResult on_irq_exit(CoreId core, Nanos now) {
    auto& cc = core_ctx(core);
    const FrameResult r = cc.stack.pop(now);
    if (cc.recording) {
      auto& t = *cc.tcm;
      if (r.kind == FrameKind::Fault) {
        t.kernel[kFaultLenSlot] += r.actual;
        ++t.kernel[kFaultCountSlot];
      } else {
        t.kernel[kInterruptLenSlot] += r.actual;
        ++t.kernel[kInterruptCountSlot];
      }
      stats_.value_writes += 2;
      if (cc.stack.empty()) {
        t.running_since = now;
        stats_.value_writes += 1;
      }
    }
    return r;
  }

  void on_counter_advance(CoreId core, std::size_t event, std::int64_t delta, Nanos /*now*/) {
    if (event >= is_counter_.size() || !is_counter_[event])
      throw UnknownCounter("event index " + std::to_string(event) + " is not a catalog CPU counter");
    auto& cc = core_ctx(core);
    if (!cc.recording || !cc.stack.empty()) return;
    auto& t = *cc.tcm;
    const int slot = t.enabled->slot(event);
    if (slot < 0) return;
    t.counters[static_cast<std::size_t>(slot)] += delta;
    ++stats_.value_writes;
  }

  const RecorderStats& stats() const { return stats_; }
  const EventCatalog& catalog() const { return catalog_; }
  const RecorderConfig& config() const { return config_; }
  const EnabledSet& enabled() const { return *enabled_; }
  const TcmStore& tcm_store() const { return tcms_; }
  std::size_t stack_depth(CoreId core) const {
    return core < cores_.size() ? cores_[core].stack.depth() : 0;
  }
  bool core_recording(CoreId core) const { return core < cores_.size() && cores_[core].recording; }
  const ThreadContext* thread_context(ThreadId t) const {
    return const_cast<TcmStore&>(tcms_).find(t);
  }

 private:
  bool selected(std::uint64_t serial, std::string_view task_id) const {
    if (config_.selector) return config_.selector(serial, task_id);
    return unit_interval(mix64(config_.seed ^ mix64(serial + 0x5e1ec7ULL))) < config_.selection_rate;
  }

  CoreContext& core_ctx(CoreId core) {
    if (core >= cores_.size()) cores_.resize(core + 1);
    return cores_[core];
  }

  void close_window(ThreadContext& t, Nanos now) {
    if (!t.running_since) return;
    t.kernel[kRunningLenSlot] += now - *t.running_since;
    t.running_since.reset();
    stats_.value_writes += 1;
  }

  void start_epoch(std::uint64_t epoch) {
    enabled_ = std::make_shared<const EnabledSet>(select_epoch_counters(catalog_, config_.seed, epoch));
    ++stats_.epochs;
    if (config_.keep_epoch_history) {
      std::vector<std::string> names;
      for (auto i : enabled_->events) names.push_back(catalog_.at(i).name);
      stats_.epoch_history.emplace_back(epoch, std::move(names));
    }
  }

  static std::string nested_message(ThreadId thread, std::string_view task_id) {
    return "task '" + std::string(task_id) + "' begins while thread " + std::to_string(thread) +
           " has an AppTask open";
  }
  static std::string unmatched_message(ThreadId thread, std::string_view task_id) {
    return "end of task '" + std::string(task_id) + "' on thread " + std::to_string(thread) +
           " without a matching begin";
  }

  EventCatalog catalog_;
  RecorderConfig config_;
  std::vector<bool> is_counter_;
  TcmStore tcms_;
  std::vector<CoreContext> cores_;
  std::unordered_map<ThreadId, std::string> unselected_;
  std::shared_ptr<const EnabledSet> enabled_;
  RecorderStats stats_;
  std::ostream* sink_ = nullptr;
};

/// Feeds a machine event stream into a Recorder.
class ReplayDriver {
 public:
  ReplayDriver(Recorder& recorder, const sim::StreamNames& names)
      : recorder_(recorder), names_(names) {}

  /// Keep each frame's actual length, keyed by instance id.
  void capture_frames(bool on) { capture_ = on; }
  void on_record(std::function<void(TaskRecord&&)> fn) { on_record_ = std::move(fn); }

  void feed(const sim::MachineEvent& e) {
    using sim::EventType;
    recorder_.epoch_tick(e.ts);
    switch (e.type) {
      case EventType::TaskBegin:
        recorder_.begin_app_task(static_cast<ThreadId>(e.id), e.core, task_name(e.value), e.ts);
        break;
      case EventType::TaskEnd: {
        auto r = recorder_.end_app_task(static_cast<ThreadId>(e.id), e.core, task_name(e.value), e.ts);
        if (r && on_record_) on_record_(std::move(*r));
        break;
      }
      case EventType::SchedIn:
        recorder_.on_sched_in(static_cast<ThreadId>(e.id), e.core, e.ts);
        break;
      case EventType::SchedOut:
        recorder_.on_sched_out(static_cast<ThreadId>(e.id), e.core, e.ts, e.value != 0);
        break;
      case EventType::InterruptStart:
      case EventType::FaultStart:
        recorder_.on_irq_enter(e.core, e.ts, sim::frame_kind(e.type));
        if (capture_) open_ids(e.core).push_back(e.id);
        break;
      case EventType::InterruptEnd:
      case EventType::FaultEnd: {
        const auto r = recorder_.on_irq_exit(e.core, e.ts);
        if (capture_) {
          auto& ids = open_ids(e.core);
          actual_.emplace(ids.back(), r.actual);
          ids.pop_back();
        }
        break;
      }
      case EventType::CounterAdvance:
        recorder_.on_counter_advance(e.core, catalog_index(e.id), e.value, e.ts);
        break;
    }
  }

  void feed(const std::vector<sim::MachineEvent>& events) {
    for (const auto& e : events) feed(e);
  }

  const std::unordered_map<std::uint64_t, Nanos>& frame_lengths() const { return actual_; }

 private:
  std::string_view task_name(std::int64_t index) const {
    const auto i = static_cast<std::size_t>(index);
    if (i >= names_.tasks.size()) throw MismatchedRun("task index " + std::to_string(index) + " has no name");
    return names_.tasks[i];
  }

  std::size_t catalog_index(std::uint64_t counter) {
    if (counter >= map_.size()) map_.resize(counter + 1, kUnmapped);
    if (map_[counter] == kUnmapped) {
      if (counter >= names_.counters.size())
        throw UnknownCounter("counter index " + std::to_string(counter) + " has no name");
      const auto i = recorder_.catalog().find(names_.counters[counter]);
      if (i == EventCatalog::npos)
        throw UnknownCounter("counter '" + names_.counters[counter] + "' is not in the catalog");
      map_[counter] = i;
    }
    return map_[counter];
  }

  std::vector<std::uint64_t>& open_ids(CoreId core) {
    if (core >= ids_.size()) ids_.resize(core + 1);
    return ids_[core];
  }

  static constexpr std::size_t kUnmapped = static_cast<std::size_t>(-2);

  Recorder& recorder_;
  const sim::StreamNames& names_;
  bool capture_ = false;
  std::function<void(TaskRecord&&)> on_record_;
  std::vector<std::size_t> map_;
  std::vector<std::vector<std::uint64_t>> ids_;
  std::unordered_map<std::uint64_t, Nanos> actual_;
};

}  // namespace tailvar
