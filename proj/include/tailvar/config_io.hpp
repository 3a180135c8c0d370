// Copyright 2026 The tailvar Authors
// SPDX-License-Identifier: Apache-2.0

// JSON loaders for machines, scenarios, catalogs and analysis settings.
// Unknown keys are rejected so that a typo cannot silently fall back to a
// default.

#pragma once

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "tailvar/analyzer.hpp"
#include "tailvar/recorder.hpp"
#include "tailvar/sim/machine.hpp"
#include "tailvar/trace_model.hpp"

namespace tailvar::config {

using Json = nlohmann::json;

inline Json parse_json(std::string_view text, std::string_view origin) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string(origin) + ": " + e.what());
  }
}

inline Json load_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_json(buf.str(), path);
}

namespace detail {

inline void expect_object(const Json& j, std::string_view what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
}

inline void allow_keys(const Json& j, std::string_view what, std::initializer_list<std::string_view> keys) {
  expect_object(j, what);
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (auto allowed : keys) ok |= (k == allowed);
    if (!ok) throw ConfigError(std::string(what) + ": unknown key '" + k + "'");
  }
}

template <typename T>
void read(const Json& j, std::string_view key, T& out, std::string_view what) {
  auto it = j.find(std::string(key));
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string(what) + ": key '" + std::string(key) + "' has the wrong type");
  }
}

template <typename T>
T required(const Json& j, std::string_view key, std::string_view what) {
  if (!j.contains(std::string(key)))
    throw ConfigError(std::string(what) + ": missing key '" + std::string(key) + "'");
  T out{};
  read(j, key, out, what);
  return out;
}

}  // namespace detail

/// {"dist": "fixed", "value_ns": v}
/// {"dist": "uniform", "min_ns": a, "max_ns": b}
/// {"dist": "exponential", "min_ns": a, "mean_excess_ns": m}
inline sim::LengthDist length_from_json(const Json& j, std::string_view what) {
  using detail::required;
  detail::allow_keys(j, what, {"dist", "value_ns", "min_ns", "max_ns", "mean_excess_ns"});
  const auto dist = required<std::string>(j, "dist", what);
  if (dist == "fixed") return sim::LengthDist::fixed(required<Nanos>(j, "value_ns", what));
  if (dist == "uniform")
    return sim::LengthDist::uniform(required<Nanos>(j, "min_ns", what), required<Nanos>(j, "max_ns", what));
  if (dist == "exponential")
    return sim::LengthDist::exponential(required<Nanos>(j, "min_ns", what),
                                        required<Nanos>(j, "mean_excess_ns", what));
  throw ConfigError(std::string(what) + ": unknown distribution '" + dist + "'");
}

inline Json length_to_json(const sim::LengthDist& d) {
  switch (d.kind) {
    case sim::LengthDist::Kind::Fixed: return {{"dist", "fixed"}, {"value_ns", d.a}};
    case sim::LengthDist::Kind::Uniform: return {{"dist", "uniform"}, {"min_ns", d.a}, {"max_ns", d.b}};
    case sim::LengthDist::Kind::Exponential:
      return {{"dist", "exponential"}, {"min_ns", d.a}, {"mean_excess_ns", d.b}};
  }
  return {};
}

inline sim::ArrivalModel arrivals_from_json(const Json& j, std::string_view what) {
  detail::allow_keys(j, what,
                     {"rate_per_sec", "burstiness", "burstiness_max", "phase_length_ns", "batch_spread_ns", "length"});
  sim::ArrivalModel m;
  detail::read(j, "rate_per_sec", m.rate, what);
  detail::read(j, "burstiness", m.burstiness, what);
  detail::read(j, "burstiness_max", m.burstiness_max, what);
  detail::read(j, "phase_length_ns", m.phase_length, what);
  detail::read(j, "batch_spread_ns", m.batch_spread, what);
  if (j.contains("length")) m.length = length_from_json(j["length"], std::string(what) + ".length");
  return m;
}

inline sim::MachineConfig machine_from_json(const Json& j) {
  constexpr std::string_view what = "machine";
  detail::allow_keys(j, what,
                     {"cores", "seed", "counter_tick_ns", "max_nesting", "thread_id_base", "scheduler",
                      "interrupts", "faults", "counters"});
  sim::MachineConfig m;
  detail::read(j, "cores", m.cores, what);
  detail::read(j, "seed", m.seed, what);
  detail::read(j, "counter_tick_ns", m.counter_tick, what);
  detail::read(j, "max_nesting", m.max_nesting, what);
  detail::read(j, "thread_id_base", m.thread_id_base, what);
  if (j.contains("scheduler")) {
    const auto& s = j["scheduler"];
    detail::allow_keys(s, "machine.scheduler", {"quantum_ns", "jitter_ns"});
    detail::read(s, "quantum_ns", m.scheduler.quantum, "machine.scheduler");
    detail::read(s, "jitter_ns", m.scheduler.jitter, "machine.scheduler");
  }
  if (j.contains("interrupts")) m.interrupts = arrivals_from_json(j["interrupts"], "machine.interrupts");
  if (j.contains("faults")) m.faults = arrivals_from_json(j["faults"], "machine.faults");
  if (j.contains("counters")) {
    if (!j["counters"].is_array()) throw ConfigError("machine.counters must be an array");
    for (const auto& c : j["counters"]) {
      detail::allow_keys(c, "machine.counters[]", {"event", "task_delta", "task_jitter", "kernel_delta"});
      sim::CounterModel cm;
      cm.event = detail::required<std::string>(c, "event", "machine.counters[]");
      detail::read(c, "task_delta", cm.task_delta, "machine.counters[]");
      detail::read(c, "task_jitter", cm.task_jitter, "machine.counters[]");
      detail::read(c, "kernel_delta", cm.kernel_delta, "machine.counters[]");
      m.counters.push_back(std::move(cm));
    }
  }
  return m;
}

inline sim::WorkloadScenario workload_from_json(const Json& j) {
  constexpr std::string_view what = "scenario";
  sim::WorkloadScenario s;
  detail::read(j, "name", s.name, what);
  if (!j.contains("groups") || !j["groups"].is_array()) throw ConfigError("scenario needs a 'groups' array");
  for (const auto& g : j["groups"]) {
    detail::allow_keys(g, "scenario.groups[]", {"task_prefix", "threads", "work", "think"});
    sim::ThreadGroup tg;
    detail::read(g, "task_prefix", tg.task_prefix, "scenario.groups[]");
    detail::read(g, "threads", tg.threads, "scenario.groups[]");
    if (g.contains("work")) tg.work = length_from_json(g["work"], "scenario.groups[].work");
    if (g.contains("think")) {
      tg.think = length_from_json(g["think"], "scenario.groups[].think");
    }
    s.groups.push_back(std::move(tg));
  }
  if (j.contains("planted")) {
    for (const auto& p : j["planted"]) {
      constexpr std::string_view pw = "scenario.planted[]";
      detail::allow_keys(p, pw,
                         {"event", "fraction", "magnitude_ns", "counter_boost", "active_from_ns", "active_until_ns"});
      sim::PlantedCause pc;
      pc.event = detail::required<std::string>(p, "event", pw);
      detail::read(p, "fraction", pc.fraction, pw);
      detail::read(p, "magnitude_ns", pc.magnitude, pw);
      detail::read(p, "counter_boost", pc.counter_boost, pw);
      detail::read(p, "active_from_ns", pc.active_from, pw);
      detail::read(p, "active_until_ns", pc.active_until, pw);
      s.planted.push_back(std::move(pc));
    }
  }
  return s;
}

/// Recorder settings; `catalog` and the run seed are supplied separately.
inline RecorderConfig recorder_from_json(const Json& j) {
  constexpr std::string_view what = "recorder";
  detail::allow_keys(j, what, {"selection_rate", "epoch_length_ns", "split_wait_states"});
  RecorderConfig r;
  detail::read(j, "selection_rate", r.selection_rate, what);
  detail::read(j, "epoch_length_ns", r.epoch_length, what);
  detail::read(j, "split_wait_states", r.split_wait_states, what);
  return r;
}

inline AnalysisConfig analysis_from_json(const Json& j) {
  constexpr std::string_view what = "analysis";
  detail::allow_keys(j, what,
                     {"p_target", "cdf_ranges", "merge_r2", "prop_r2", "min_tasks_per_event", "note_jaccard",
                      "flag_top_k"});
  AnalysisConfig a;
  detail::read(j, "p_target", a.p_target, what);
  detail::read(j, "cdf_ranges", a.cdf_ranges, what);
  detail::read(j, "merge_r2", a.merge_r2, what);
  detail::read(j, "prop_r2", a.prop_r2, what);
  detail::read(j, "min_tasks_per_event", a.min_tasks_per_event, what);
  detail::read(j, "note_jaccard", a.note_jaccard, what);
  detail::read(j, "flag_top_k", a.flag_top_k, what);
  a.validate();
  return a;
}

/// A scenario file: the workload plus optional machine, recorder and
/// analysis sections and a default duration.
struct ScenarioFile {
  sim::WorkloadScenario workload;
  std::optional<sim::MachineConfig> machine;
  std::optional<RecorderConfig> recorder;
  std::optional<AnalysisConfig> analysis;
  std::optional<Nanos> duration;
  std::optional<Nanos> segment_ns;
};

inline ScenarioFile scenario_from_json(const Json& j) {
  detail::allow_keys(j, "scenario",
                     {"name", "groups", "planted", "machine", "recorder", "analysis", "duration_ns", "segment_ns"});
  ScenarioFile f;
  f.workload = workload_from_json(j);
  if (j.contains("machine")) f.machine = machine_from_json(j["machine"]);
  if (j.contains("recorder")) f.recorder = recorder_from_json(j["recorder"]);
  if (j.contains("analysis")) f.analysis = analysis_from_json(j["analysis"]);
  if (j.contains("duration_ns")) f.duration = detail::required<Nanos>(j, "duration_ns", "scenario");
  if (j.contains("segment_ns")) f.segment_ns = detail::required<Nanos>(j, "segment_ns", "scenario");
  return f;
}

/// Catalog file. Kernel events are implicit; only CPU counters are listed:
///   {"fixed_slots": 3, "configurable_slots": 4,
///    "events": [{"name": "ctr.X", "group": "INST", "slot": "fixed"}, ...],
///    "parent_child": [{"child": "ctr.A", "parent": "ctr.B"}, ...]}
inline EventCatalog catalog_from_json(const Json& j) {
  constexpr std::string_view what = "catalog";
  detail::allow_keys(j, what, {"fixed_slots", "configurable_slots", "events", "parent_child", "description"});
  EventCatalog c;
  std::size_t fixed = 3, configurable = 4;
  detail::read(j, "fixed_slots", fixed, what);
  detail::read(j, "configurable_slots", configurable, what);
  c.set_slots(fixed, configurable);
  for (const auto& k : EventCatalog::standard_kernel_events()) c.add(k);
  if (j.contains("events")) {
    for (const auto& e : j["events"]) {
      constexpr std::string_view ew = "catalog.events[]";
      detail::allow_keys(e, ew, {"name", "group", "slot"});
      EventSpec spec;
      spec.name = detail::required<std::string>(e, "name", ew);
      const auto group = detail::required<std::string>(e, "group", ew);
      const auto g = parse_group(group);
      if (!g || *g == EventGroup::KERNEL)
        throw ConfigError("catalog event '" + spec.name + "': invalid group '" + group + "'");
      spec.group = *g;
      spec.kind = EventKind::CpuCounter;
      const auto slot = detail::required<std::string>(e, "slot", ew);
      if (slot == "fixed") {
        spec.fixed = true;
      } else if (slot == "configurable") {
        spec.configurable = true;
      } else {
        throw ConfigError("catalog event '" + spec.name + "': slot must be fixed or configurable");
      }
      c.add(std::move(spec));
    }
  }
  if (j.contains("parent_child")) {
    for (const auto& p : j["parent_child"]) {
      detail::allow_keys(p, "catalog.parent_child[]", {"child", "parent"});
      c.add_parent_child(detail::required<std::string>(p, "child", "catalog.parent_child[]"),
                         detail::required<std::string>(p, "parent", "catalog.parent_child[]"));
    }
  }
  c.validate();
  return c;
}

inline EventCatalog load_catalog(const std::string& path) { return catalog_from_json(load_json_file(path)); }

}  // namespace tailvar::config
