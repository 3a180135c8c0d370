// Copyright 2026 The tailvar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "tailvar/recorder.hpp"
#include "tailvar/sim/ledger.hpp"
#include "tailvar/sim/machine.hpp"
#include "tailvar/trace_model.hpp"

namespace tailvar {

struct SimulationOptions {
  Nanos duration = kSecond;
  bool collect_records = true;
  bool compute_ledger = true;
  std::ostream* trace_out = nullptr;  // records are written as produced
  std::ostream* event_dump = nullptr;
};

struct SimulationResult {
  std::vector<TaskRecord> records;
  std::optional<sim::GroundTruthLedger> ledger;
  RecorderStats stats;
  sim::StreamNames names;
  std::uint64_t events = 0;
};

/// Runs the machine once into the recorder and the structural half of the
/// oracle, then reruns it to attribute counter ticks. The second run must
/// reproduce the first event for event, which doubles as a determinism check.
inline SimulationResult simulate_and_record(const sim::MachineConfig& machine,
                                            const sim::WorkloadScenario& workload, const EventCatalog& catalog,
                                            const RecorderConfig& recorder_config,
                                            const SimulationOptions& options) {
  SimulationResult out;
  Recorder recorder(catalog, recorder_config);
  recorder.set_trace_sink(options.trace_out);
  sim::LedgerOracle oracle;

  sim::Machine m(machine, workload);
  ReplayDriver driver(recorder, m.names());
  if (options.collect_records)
    driver.on_record([&](TaskRecord&& r) { out.records.push_back(std::move(r)); });
  std::uint64_t seq = 0;
  m.run(options.duration, [&](const sim::MachineEvent& e) {
    driver.feed(e);
    if (options.compute_ledger) oracle.observe_structure(e, seq);
    if (options.event_dump) sim::dump_events(*options.event_dump, {e}, m.names());
    ++seq;
  });
  out.events = seq;
  out.names = m.names();
  out.stats = recorder.stats();

  if (options.compute_ledger) {
    oracle.finalize_structure(m.names());
    sim::Machine again(machine, workload);
    std::uint64_t seq2 = 0;
    again.run(options.duration, [&](const sim::MachineEvent& e) { oracle.observe_counter(e, seq2++); });
    if (seq2 != seq) throw MismatchedRun("simulation rerun produced a different event count");
    out.ledger = oracle.finish();
    // Catalog counters the machine never advances are exactly zero.
    for (std::size_t i = 0; i < catalog.size(); ++i) {
      const auto& e = catalog.at(i);
      if (e.kind != EventKind::CpuCounter) continue;
      if (std::find(out.names.counters.begin(), out.names.counters.end(), e.name) != out.names.counters.end())
        continue;
      for (auto& t : out.ledger->tasks) t.values.emplace(e.name, 0);
    }
  }
  return out;
}

struct VerifyDiff {
  std::string task_id;
  std::string event;  // "begin_ts", "end_ts", an event name, or "record"
  std::optional<std::int64_t> recorded;
  std::optional<std::int64_t> expected;
};

struct VerifyResult {
  std::size_t tasks_checked = 0;
  std::size_t values_checked = 0;
  std::vector<VerifyDiff> diffs;
  bool ok() const { return diffs.empty(); }
};

/// Compares every value of every recorded task with the ledger.
inline VerifyResult verify_against_ledger(const std::vector<TaskRecord>& trace,
                                          const std::vector<TaskRecord>& ledger) {
  std::unordered_map<std::string, const TaskRecord*> truth;
  for (const auto& r : ledger) truth.emplace(r.task_id, &r);
  VerifyResult out;
  std::size_t found = 0;
  for (const auto& r : trace) {
    ++out.tasks_checked;
    auto it = truth.find(r.task_id);
    if (it == truth.end()) {
      out.diffs.push_back({r.task_id, "record", std::nullopt, std::nullopt});
      continue;
    }
    ++found;
    const auto& t = *it->second;
    if (r.begin_ts != t.begin_ts) out.diffs.push_back({r.task_id, "begin_ts", r.begin_ts, t.begin_ts});
    if (r.end_ts != t.end_ts) out.diffs.push_back({r.task_id, "end_ts", r.end_ts, t.end_ts});
    for (const auto& [k, v] : r.values) {
      ++out.values_checked;
      const auto want = t.value(k);
      if (!want || *want != v) out.diffs.push_back({r.task_id, k, v, want});
    }
  }
  if (!trace.empty() && found == 0)
    throw MismatchedRun("no recorded task appears in the ledger; files are from different runs");
  return out;
}

}  // namespace tailvar
