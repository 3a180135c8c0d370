// Copyright 2026 The tailvar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "tailvar/common.hpp"

namespace tailvar {

enum class EventKind : std::uint8_t { KernelLength, KernelCount, CpuCounter };

enum class EventGroup : std::uint8_t { INST, CACHE, CYCLE, UOP, OTHER, KERNEL };

inline std::string_view to_string(EventGroup g) {
  switch (g) {
    case EventGroup::INST: return "INST";
    case EventGroup::CACHE: return "CACHE";
    case EventGroup::CYCLE: return "CYCLE";
    case EventGroup::UOP: return "UOP";
    case EventGroup::OTHER: return "OTHER";
    case EventGroup::KERNEL: return "KERNEL";
  }
  return "?";
}

inline std::optional<EventGroup> parse_group(std::string_view s) {
  static constexpr std::array<EventGroup, 6> all = {EventGroup::INST,  EventGroup::CACHE,
                                                   EventGroup::CYCLE, EventGroup::UOP,
                                                   EventGroup::OTHER, EventGroup::KERNEL};
  for (auto g : all)
    if (to_string(g) == s) return g;
  return std::nullopt;
}

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::KernelLength: return "kernel-length";
    case EventKind::KernelCount: return "kernel-count";
    case EventKind::CpuCounter: return "cpu-counter";
  }
  return "?";
}

// Kernel event names. All are recorded for every selected task.
namespace kernel_events {
inline constexpr std::string_view kSchedWaitLen = "sched_wait_len";
inline constexpr std::string_view kSchedWaitCount = "sched_wait_count";
inline constexpr std::string_view kInterruptLen = "interrupt_len";
inline constexpr std::string_view kInterruptCount = "interrupt_count";
inline constexpr std::string_view kFaultLen = "fault_len";
inline constexpr std::string_view kFaultCount = "fault_count";
inline constexpr std::string_view kRunningLen = "running_len";
inline constexpr std::string_view kMigrationCount = "migration_count";
// Only present when the recorder splits waits by thread state.
inline constexpr std::string_view kSchedRunnableLen = "sched_runnable_len";
inline constexpr std::string_view kSchedBlockedLen = "sched_blocked_len";
}  // namespace kernel_events

/// Prefix that marks CPU performance counters in event names.
inline constexpr std::string_view kCounterPrefix = "ctr.";

struct EventSpec {
  std::string name;
  EventKind kind = EventKind::CpuCounter;
  EventGroup group = EventGroup::OTHER;
  bool fixed = false;         // always-on hardware counter
  bool configurable = false;  // competes for a programmable slot

  friend bool operator==(const EventSpec&, const EventSpec&) = default;
};

struct ParentChild {
  std::string child;
  std::string parent;

  friend bool operator==(const ParentChild&, const ParentChild&) = default;
};

/// The set of recordable events, their groups and slot limits.
class EventCatalog {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  EventCatalog() = default;

  /// Adds an event. Throws ConfigError on a duplicate name or an invalid
  /// group/kind combination.
  void add(EventSpec spec) {
    if (spec.name.empty() || !is_valid_event_name(spec.name))
      throw ConfigError("invalid event name '" + spec.name + "'");
    if (index_.contains(spec.name)) throw ConfigError("duplicate event '" + spec.name + "'");
    const bool kernel = spec.kind != EventKind::CpuCounter;
    if (kernel != (spec.group == EventGroup::KERNEL))
      throw ConfigError("event '" + spec.name + "': kernel events must be in group KERNEL");
    if (kernel && (spec.fixed || spec.configurable))
      throw ConfigError("event '" + spec.name + "': kernel events cannot occupy counter slots");
    if (!kernel && spec.fixed == spec.configurable)
      throw ConfigError("event '" + spec.name + "': counter must be exactly one of fixed/configurable");
    index_.emplace(spec.name, events_.size());
    events_.push_back(std::move(spec));
  }

  void add_parent_child(std::string child, std::string parent) {
    pairs_.push_back({std::move(child), std::move(parent)});
  }

  void set_slots(std::size_t fixed_slots, std::size_t configurable_slots) {
    fixed_slots_ = fixed_slots;
    configurable_slots_ = configurable_slots;
  }

  /// Checks cross-references: pairs name members, the parent relation is
  /// acyclic, and fixed counters fit their slots.
  void validate() const {
    for (const auto& pc : pairs_) {
      if (find(pc.child) == npos || find(pc.parent) == npos)
        throw ConfigError("parent-child pair references unknown event: " + pc.child + " -> " +
                          pc.parent);
      if (pc.child == pc.parent) throw ConfigError("event is its own parent: " + pc.child);
    }
    // Three-colour DFS over child -> parent edges.
    std::vector<std::vector<std::size_t>> parents(events_.size());
    for (const auto& pc : pairs_) parents[find(pc.child)].push_back(find(pc.parent));
    std::vector<std::uint8_t> colour(events_.size(), 0);
    auto visit = [&](auto&& self, std::size_t node) -> void {
      colour[node] = 1;
      for (auto p : parents[node]) {
        if (colour[p] == 1)
          throw ConfigError("cycle in parent-child relation at " + events_[p].name);
        if (colour[p] == 0) self(self, p);
      }
      colour[node] = 2;
    };
    for (std::size_t i = 0; i < events_.size(); ++i)
      if (colour[i] == 0) visit(visit, i);
    std::size_t fixed = 0;
    for (const auto& e : events_) fixed += e.fixed ? 1 : 0;
    if (fixed > fixed_slots_)
      throw ConfigError("catalog has " + std::to_string(fixed) + " fixed counters but only " +
                        std::to_string(fixed_slots_) + " fixed slots");
  }

  std::size_t find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? npos : it->second;
  }
  bool contains(std::string_view name) const { return find(name) != npos; }

  const EventSpec& at(std::size_t i) const { return events_.at(i); }
  const EventSpec* lookup(std::string_view name) const {
    auto i = find(name);
    return i == npos ? nullptr : &events_[i];
  }

  std::size_t size() const { return events_.size(); }
  const std::vector<EventSpec>& events() const { return events_; }
  const std::vector<ParentChild>& parent_child() const { return pairs_; }
  std::size_t fixed_slots() const { return fixed_slots_; }
  std::size_t configurable_slots() const { return configurable_slots_; }
  /// Counters recordable at once in one epoch.
  std::size_t counters_per_epoch() const { return fixed_slots_ + configurable_slots_; }

  std::vector<std::size_t> indices_where(bool (*pred)(const EventSpec&)) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < events_.size(); ++i)
      if (pred(events_[i])) out.push_back(i);
    return out;
  }

  /// The eight kernel events every recorder emits.
  static std::vector<EventSpec> standard_kernel_events() {
    using namespace kernel_events;
    auto len = [](std::string_view n) {
      return EventSpec{std::string(n), EventKind::KernelLength, EventGroup::KERNEL, false, false};
    };
    auto cnt = [](std::string_view n) {
      return EventSpec{std::string(n), EventKind::KernelCount, EventGroup::KERNEL, false, false};
    };
    return {len(kSchedWaitLen),   cnt(kSchedWaitCount), len(kInterruptLen), cnt(kInterruptCount),
            len(kFaultLen),       cnt(kFaultCount),     len(kRunningLen),   cnt(kMigrationCount)};
  }

  static bool is_valid_event_name(std::string_view name) {
    return std::none_of(name.begin(), name.end(), [](char c) {
      return c == '=' || c == ',' || c == '\t' || c == '\n' || c == '\r' || c == ' ' || c == '#';
    });
  }

 private:
  std::vector<EventSpec> events_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<ParentChild> pairs_;
  std::size_t fixed_slots_ = 3;
  std::size_t configurable_slots_ = 4;
};

/// One selected AppTask: latency plus sparse cumulative event values.
struct TaskRecord {
  std::string task_id;
  Nanos begin_ts = 0;
  Nanos end_ts = 0;
  std::map<std::string, std::int64_t, std::less<>> values;

  Nanos latency() const { return end_ts - begin_ts; }

  std::optional<std::int64_t> value(std::string_view event) const {
    auto it = values.find(event);
    if (it == values.end()) return std::nullopt;
    return it->second;
  }
  bool has(std::string_view event) const { return values.find(event) != values.end(); }

  friend bool operator==(const TaskRecord&, const TaskRecord&) = default;
};

// ---------------------------------------------------------------------------
// Trace file format
//
//   # tailvar-trace v1
//   <task_id>\t<begin_ns>\t<end_ns>[\t<k1>=<v1>,<k2>=<v2>,...]\n
//
// Lines starting with '#' are comments. Keys are written in sorted order.
// Every record line is newline-terminated; an unterminated final line is a
// truncated write and is reported as malformed.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kTraceHeader = "# tailvar-trace v1";

inline bool is_valid_task_id(std::string_view id) {
  return !id.empty() && id.front() != '#' &&
         std::none_of(id.begin(), id.end(), [](char c) { return c == '\t' || c == '\n' || c == '\r'; });
}

/// Checks the TaskRecord invariants the encoder relies on.
inline std::optional<std::string> record_problem(const TaskRecord& r) {
  if (!is_valid_task_id(r.task_id)) return "invalid task id";
  if (r.end_ts < r.begin_ts) return "negative latency";
  for (const auto& [k, v] : r.values) {
    if (k.empty() || !EventCatalog::is_valid_event_name(k)) return "invalid event name '" + k + "'";
    if (v < 0) return "negative value for '" + k + "'";
  }
  return std::nullopt;
}

inline std::string encode_record(const TaskRecord& r) {
  if (auto problem = record_problem(r)) throw ConfigError("cannot encode record: " + *problem);
  std::string line = r.task_id;
  line += '\t';
  line += std::to_string(r.begin_ts);
  line += '\t';
  line += std::to_string(r.end_ts);
  if (!r.values.empty()) {
    line += '\t';
    bool first = true;
    for (const auto& [k, v] : r.values) {
      if (!first) line += ',';
      first = false;
      line += k;
      line += '=';
      line += std::to_string(v);
    }
  }
  line += '\n';
  return line;
}

inline void encode_trace(std::ostream& out, const std::vector<TaskRecord>& records,
                         bool with_header = true) {
  if (with_header) out << kTraceHeader << '\n';
  for (const auto& r : records) out << encode_record(r);
}

inline std::string encode_trace(const std::vector<TaskRecord>& records, bool with_header = true) {
  std::ostringstream out;
  encode_trace(out, records, with_header);
  return out.str();
}

struct MalformedRecord {
  std::size_t line_no = 0;  // 1-based
  std::string reason;
};

struct DecodeResult {
  std::vector<TaskRecord> records;
  std::vector<MalformedRecord> errors;
  bool ok() const { return errors.empty(); }
};

namespace detail {

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(s.substr(start));
      return parts;
    }
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace detail

/// Parses one record line (without its newline).
inline std::variant<TaskRecord, std::string> decode_record(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  auto fields = detail::split(line, '\t');
  if (fields.size() != 3 && fields.size() != 4)
    return std::string("expected 3 or 4 tab-separated fields, got ") + std::to_string(fields.size());
  TaskRecord r;
  r.task_id = std::string(fields[0]);
  if (!is_valid_task_id(r.task_id)) return std::string("invalid task id");
  if (!detail::parse_int(fields[1], r.begin_ts)) return std::string("bad begin timestamp");
  if (!detail::parse_int(fields[2], r.end_ts)) return std::string("bad end timestamp");
  if (r.end_ts < r.begin_ts) return std::string("negative latency");
  if (fields.size() == 4 && !fields[3].empty()) {
    for (auto pair : detail::split(fields[3], ',')) {
      auto eq = pair.find('=');
      if (eq == std::string_view::npos || eq == 0) return "bad key=value pair '" + std::string(pair) + "'";
      std::string key(pair.substr(0, eq));
      if (!EventCatalog::is_valid_event_name(key)) return "invalid event name '" + key + "'";
      std::int64_t v = 0;
      if (!detail::parse_int(pair.substr(eq + 1), v)) return "bad value for '" + key + "'";
      if (v < 0) return "negative value for '" + key + "'";
      if (!r.values.emplace(std::move(key), v).second)
        return "duplicate key '" + std::string(pair.substr(0, eq)) + "'";
    }
  }
  return r;
}

/// Decodes a whole trace. Malformed lines are collected, never dropped
/// silently, and decoding continues with the next line.
inline DecodeResult decode_trace(std::string_view text) {
  DecodeResult out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    ++line_no;
    auto nl = text.find('\n', pos);
    const bool terminated = nl != std::string_view::npos;
    auto line = text.substr(pos, terminated ? nl - pos : std::string_view::npos);
    pos = terminated ? nl + 1 : text.size();
    if (line.empty() || line == "\r") continue;
    if (line.front() == '#') continue;
    if (!terminated) {
      out.errors.push_back({line_no, "truncated record (missing newline)"});
      continue;
    }
    auto parsed = decode_record(line);
    if (auto* rec = std::get_if<TaskRecord>(&parsed))
      out.records.push_back(std::move(*rec));
    else
      out.errors.push_back({line_no, std::get<std::string>(parsed)});
  }
  return out;
}

inline DecodeResult decode_trace(std::istream& in) {
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  return decode_trace(std::string_view(text));
}

}  // namespace tailvar
