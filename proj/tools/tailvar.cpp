// Copyright 2026 The tailvar Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: simulate, verify, analyze, plan.
//
// Exit codes: 0 success, 1 finished with warnings, 2 invalid input,
// 3 trace and ledger disagree.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tailvar/analyzer.hpp"
#include "tailvar/config_io.hpp"
#include "tailvar/pipeline.hpp"
#include "tailvar/planner.hpp"
#include "tailvar/segments.hpp"
#include "tailvar/trace_model.hpp"

namespace fs = std::filesystem;
using tailvar::Nanos;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit : int { kOk = 0, kWarnings = 1, kInvalid = 2, kMismatch = 3 };

/// "250us", "10ms", "2s", "1500ns" or a bare nanosecond count.
Nanos parse_duration(const std::string& text) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(text, &pos);
  } catch (const std::exception&) {
    throw tailvar::ConfigError("bad duration '" + text + "'");
  }
  const std::string unit = text.substr(pos);
  Nanos scale = 1;
  if (unit.empty() || unit == "ns") scale = 1;
  else if (unit == "us") scale = tailvar::kMicro;
  else if (unit == "ms") scale = tailvar::kMilli;
  else if (unit == "s") scale = tailvar::kSecond;
  else throw tailvar::ConfigError("bad duration unit in '" + text + "'");
  if (v < 0) throw tailvar::ConfigError("duration must be >= 0: '" + text + "'");
  return static_cast<Nanos>(v) * scale;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw tailvar::ConfigError("cannot create output directory '" + dir + "': " + ec.message());
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw tailvar::ConfigError("cannot write '" + p.string() + "'");
  return out;
}

std::vector<tailvar::TaskRecord> read_trace(const std::string& path, std::vector<std::string>* warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw tailvar::ConfigError("cannot read trace '" + path + "'");
  auto decoded = tailvar::decode_trace(in);
  for (const auto& e : decoded.errors) {
    const std::string msg = path + ":" + std::to_string(e.line_no) + ": " + e.reason;
    if (!warnings) throw tailvar::ConfigError(msg);
    warnings->push_back(msg);
  }
  return std::move(decoded.records);
}

struct Manifest {
  std::string subcommand;
  nlohmann::json configs = nlohmann::json::object();
  nlohmann::json inputs = nlohmann::json::object();
  nlohmann::json outputs = nlohmann::json::array();
  std::optional<std::uint64_t> seed;

  void write(const std::string& dir) const {
    nlohmann::json j;
    j["subcommand"] = subcommand;
    j["configs"] = configs;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["seed"] = seed ? nlohmann::json(*seed) : nlohmann::json(nullptr);
    j["tool_version"] = kVersion;
    j["wall_clock"] = utc_now();
    auto out = open_out(fs::path(dir) / "manifest.json");
    out << j.dump(2) << '\n';
  }
};

// ---- simulate ---------------------------------------------------------------

struct SimulateArgs {
  std::string scenario;
  std::string machine;
  std::string catalog;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> duration;
  std::optional<std::uint32_t> cores;
  std::optional<double> selection_rate;
  std::optional<std::string> epoch_len;
  bool split_wait = false;
  bool dump_events = false;
};

void write_instances(std::ostream& out, const tailvar::sim::GroundTruthLedger& ledger) {
  out << "instance\tcore\tkind\tstart\tend\tnet\n";
  for (const auto& i : ledger.instances)
    out << i.instance << '\t' << i.core << '\t' << (i.kind == tailvar::sim::FrameKind::Interrupt ? "irq" : "fault")
        << '\t' << i.start << '\t' << i.end << '\t' << i.net << '\n';
}

int cmd_simulate(const SimulateArgs& a) {
  namespace cfg = tailvar::config;
  const auto scenario = cfg::scenario_from_json(cfg::load_json_file(a.scenario));
  tailvar::sim::MachineConfig machine;
  if (!a.machine.empty()) {
    machine = cfg::machine_from_json(cfg::load_json_file(a.machine));
  } else if (scenario.machine) {
    machine = *scenario.machine;
  } else {
    throw tailvar::ConfigError("no machine section in scenario and no --machine file");
  }
  if (a.seed) machine.seed = *a.seed;
  if (a.cores) machine.cores = *a.cores;
  machine.validate();

  const auto catalog = cfg::load_catalog(a.catalog);
  tailvar::RecorderConfig rec = scenario.recorder.value_or(tailvar::RecorderConfig{});
  rec.seed = machine.seed;
  if (a.selection_rate) rec.selection_rate = *a.selection_rate;
  if (a.epoch_len) rec.epoch_length = parse_duration(*a.epoch_len);
  if (a.split_wait) rec.split_wait_states = true;
  rec.keep_epoch_history = false;
  rec.validate();

  tailvar::SimulationOptions opts;
  opts.duration = a.duration ? parse_duration(*a.duration) : scenario.duration.value_or(tailvar::kSecond);
  if (opts.duration < 1) throw tailvar::ConfigError("duration must be >= 1 ns");

  ensure_dir(a.out);
  const fs::path dir(a.out);
  Manifest manifest;
  manifest.subcommand = "simulate";
  manifest.configs["scenario"] = a.scenario;
  if (!a.machine.empty()) manifest.configs["machine"] = a.machine;
  manifest.configs["catalog"] = a.catalog;
  manifest.seed = machine.seed;

  std::ostringstream trace_buf;
  std::ofstream dump;
  opts.trace_out = &trace_buf;
  if (a.dump_events) {
    dump = open_out(dir / "events.txt");
    opts.event_dump = &dump;
  }
  trace_buf << "# tailvar-trace v1\n";
  auto result = tailvar::simulate_and_record(machine, scenario.workload, catalog, rec, opts);

  {
    auto out = open_out(dir / "trace.tsv");
    out << trace_buf.str();
  }
  {
    auto out = open_out(dir / "ledger.tsv");
    tailvar::encode_trace(out, result.ledger->tasks);
  }
  {
    auto out = open_out(dir / "instances.tsv");
    write_instances(out, *result.ledger);
  }
  {
    nlohmann::json s;
    s["events"] = result.events;
    s["tasks_seen"] = result.stats.tasks_seen;
    s["records_emitted"] = result.stats.records_emitted;
    s["bytes_written"] = result.stats.bytes_written;
    s["epochs"] = result.stats.epochs;
    s["value_writes"] = result.stats.value_writes;
    s["flag_writes"] = result.stats.flag_writes;
    s["ledger_tasks"] = result.ledger->tasks.size();
    s["frame_instances"] = result.ledger->instances.size();
    s["duration_ns"] = opts.duration;
    s["selection_rate"] = rec.selection_rate;
    auto out = open_out(dir / "stats.json");
    out << s.dump(2) << '\n';
  }
  manifest.outputs = {"trace.tsv", "ledger.tsv", "instances.tsv", "stats.json"};
  if (a.dump_events) manifest.outputs.push_back("events.txt");
  manifest.write(a.out);

  const auto v = tailvar::verify_against_ledger(result.records, result.ledger->tasks);
  std::cout << "simulated " << result.events << " events, " << result.ledger->tasks.size() << " tasks, "
            << result.records.size() << " recorded\n";
  if (!v.ok()) {
    std::cerr << "recorder disagrees with the ledger on " << v.diffs.size() << " values\n";
    return kMismatch;
  }
  return kOk;
}

// ---- verify -----------------------------------------------------------------

struct VerifyArgs {
  std::string trace;
  std::string ledger;
  std::string out;
};

std::string opt_str(const std::optional<std::int64_t>& v) { return v ? std::to_string(*v) : "-"; }

int cmd_verify(const VerifyArgs& a) {
  const auto trace = read_trace(a.trace, nullptr);
  const auto ledger = read_trace(a.ledger, nullptr);
  const auto v = tailvar::verify_against_ledger(trace, ledger);
  std::ostringstream report;
  report << (v.ok() ? "PASS" : "FAIL") << ": " << v.tasks_checked << " tasks, " << v.values_checked
         << " values, " << v.diffs.size() << " mismatches\n";
  for (std::size_t i = 0; i < v.diffs.size() && i < 10; ++i) {
    const auto& d = v.diffs[i];
    report << "  task " << d.task_id << " " << d.event << ": recorded " << opt_str(d.recorded) << ", expected "
           << opt_str(d.expected) << '\n';
  }
  std::cout << report.str();
  if (!a.out.empty()) {
    ensure_dir(a.out);
    auto out = open_out(fs::path(a.out) / "verify.txt");
    out << report.str();
    Manifest m;
    m.subcommand = "verify";
    m.inputs["trace"] = a.trace;
    m.inputs["ledger"] = a.ledger;
    m.outputs = {"verify.txt"};
    m.write(a.out);
  }
  return v.ok() ? kOk : kMismatch;
}

// ---- analyze ----------------------------------------------------------------

struct AnalyzeArgs {
  std::string trace;
  std::string catalog;
  std::string config;
  std::string out;
  std::optional<double> p_target;
  std::optional<std::size_t> segments;
  std::optional<std::string> segment_duration;
  std::optional<std::size_t> segment_tasks;
};

tailvar::AnalysisConfig load_analysis(const std::string& path) {
  const auto j = tailvar::config::load_json_file(path);
  if (j.is_object() && j.contains("groups")) {
    const auto s = tailvar::config::scenario_from_json(j);
    return s.analysis.value_or(tailvar::AnalysisConfig{});
  }
  return tailvar::config::analysis_from_json(j);
}

int cmd_analyze(const AnalyzeArgs& a) {
  tailvar::AnalysisConfig config = a.config.empty() ? tailvar::AnalysisConfig{} : load_analysis(a.config);
  if (a.p_target) config.p_target = *a.p_target;
  config.validate();
  const auto catalog = tailvar::config::load_catalog(a.catalog);

  std::vector<std::string> warnings;
  auto records = read_trace(a.trace, &warnings);
  if (records.empty()) throw tailvar::EmptyInput("trace '" + a.trace + "' has no records");

  ensure_dir(a.out);
  const fs::path dir(a.out);
  Manifest manifest;
  manifest.subcommand = "analyze";
  manifest.inputs["trace"] = a.trace;
  manifest.configs["catalog"] = a.catalog;
  if (!a.config.empty()) manifest.configs["analysis"] = a.config;

  const auto whole = tailvar::analyze_segment(records, catalog, config, 0);
  {
    auto out = open_out(dir / "report.tsv");
    tailvar::write_report_tsv(out, whole);
  }
  {
    auto out = open_out(dir / "report.txt");
    tailvar::write_report_text(out, whole);
  }
  manifest.outputs = {"report.tsv", "report.txt"};

  const int modes = a.segments.has_value() + a.segment_duration.has_value() + a.segment_tasks.has_value();
  if (modes > 1) throw tailvar::ConfigError("use only one of --segments, --segment-duration, --segment-tasks");
  if (modes == 1) {
    tailvar::SegmentSpec spec;
    if (a.segments) spec = tailvar::SegmentSpec::equal(*a.segments);
    if (a.segment_duration) spec = tailvar::SegmentSpec::by_duration(parse_duration(*a.segment_duration));
    if (a.segment_tasks) spec = tailvar::SegmentSpec::by_tasks(*a.segment_tasks);
    auto split = tailvar::split_segments(std::move(records), spec);
    for (auto& w : split.warnings) warnings.push_back(std::move(w));
    std::vector<tailvar::ImpactReport> reports;
    for (const auto& seg : split.segments) {
      try {
        reports.push_back(tailvar::analyze_segment(seg.records, catalog, config, seg.stats.segment_index));
      } catch (const tailvar::TooFewSamples& e) {
        warnings.push_back("segment " + std::to_string(seg.stats.segment_index) + ": " + e.what());
        continue;
      }
      char name[32];
      std::snprintf(name, sizeof name, "segment_%03zu.tsv", seg.stats.segment_index);
      auto out = open_out(dir / name);
      tailvar::write_report_tsv(out, reports.back());
      manifest.outputs.push_back(name);
    }
    if (reports.size() >= 2) {
      const auto cmp = tailvar::compare_segments(reports, config);
      {
        auto out = open_out(dir / "comparison.tsv");
        tailvar::write_comparison_tsv(out, cmp);
      }
      {
        auto out = open_out(dir / "comparison_summary.tsv");
        tailvar::write_comparison_summary(out, cmp);
      }
      manifest.outputs.push_back("comparison.tsv");
      manifest.outputs.push_back("comparison_summary.tsv");
    } else {
      warnings.push_back("fewer than two analyzable segments; no comparison written");
    }
  }

  if (!warnings.empty()) {
    auto out = open_out(dir / "warnings.txt");
    for (const auto& w : warnings) out << w << '\n';
    manifest.outputs.push_back("warnings.txt");
  }
  manifest.write(a.out);

  std::cout << "analyzed " << whole.latency.task_count << " tasks; top event: "
            << (whole.ranked.empty() ? std::string("-") : whole.ranked.front().event) << '\n';
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  return warnings.empty() ? kOk : kWarnings;
}

// ---- plan -------------------------------------------------------------------

struct PlanArgs {
  std::string p_tail = "0.01";
  std::string p_req = "1";
  std::optional<std::string> p_event;
  std::optional<std::int64_t> counters;
  std::optional<std::int64_t> slots;
  std::int64_t occurrences = 1;
  std::optional<double> throughput;
  std::string out;
};

std::string fmt_seconds(double s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", s);
  return buf;
}

int cmd_plan(const PlanArgs& a) {
  using tailvar::Rational;
  tailvar::Budget b;
  b.p_tail = Rational::parse(a.p_tail);
  b.p_req = Rational::parse(a.p_req);
  b.target_occurrences = a.occurrences;
  b.throughput = a.throughput;
  if (a.counters.has_value() != a.slots.has_value())
    throw tailvar::ConfigError("--counters and --slots go together");
  if (a.p_event) {
    b.p_event = Rational::parse(*a.p_event);
  } else if (a.counters) {
    b.p_event = tailvar::Budget::event_coverage(*a.counters, *a.slots);
  } else {
    throw tailvar::ConfigError("give --p-event or --counters with --slots");
  }

  std::ostringstream t;
  t << "quantity\tvalue\n";
  t << "p_tail\t" << b.p_tail.str() << '\n';
  t << "p_req\t" << b.p_req.str() << '\n';
  t << "p_event\t" << b.p_event.str() << '\n';
  t << "p_event_fixed\t1\n";
  t << "occurrences\t" << b.target_occurrences << '\n';
  const auto single = tailvar::requests_to_observe(b);
  t << "requests\t" << Rational::to_string(single.requests) << '\n';
  if (single.seconds) t << "seconds\t" << fmt_seconds(*single.seconds) << '\n';
  if (a.counters && *a.slots >= 2) {
    const auto pen = tailvar::pair_penalty(*a.counters, *a.slots);
    const auto pair = tailvar::requests_to_observe_pair(b, *a.counters, *a.slots);
    t << "p_pair\t" << pen.p_pair.str() << '\n';
    t << "pair_ratio\t" << pen.ratio.str() << '\n';
    t << "pair_requests\t" << Rational::to_string(pair.requests) << '\n';
    if (pair.seconds) t << "pair_seconds\t" << fmt_seconds(*pair.seconds) << '\n';
  }
  std::cout << t.str();
  if (!a.out.empty()) {
    ensure_dir(a.out);
    auto out = open_out(fs::path(a.out) / "plan.tsv");
    out << t.str();
    Manifest m;
    m.subcommand = "plan";
    m.outputs = {"plan.tsv"};
    m.write(a.out);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tail latency variance attribution toolkit"};
  app.set_version_flag("--version", std::string("tailvar ") + kVersion);
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Run a scenario through the recorder; write trace and ledger");
  s->add_option("--scenario", sim.scenario, "Scenario file (JSON)")->required()->check(CLI::ExistingFile);
  s->add_option("--machine", sim.machine, "Machine file overriding the scenario's machine")->check(CLI::ExistingFile);
  s->add_option("--catalog", sim.catalog, "Event catalog (JSON)")->required()->check(CLI::ExistingFile);
  s->add_option("--out", sim.out, "Run directory")->required();
  s->add_option("--seed", sim.seed, "Seed for the machine and the recorder");
  s->add_option("--duration", sim.duration, "Simulated time, e.g. 200ms");
  s->add_option("--cores", sim.cores, "Number of cores");
  s->add_option("--selection-rate", sim.selection_rate, "Fraction of tasks recorded");
  s->add_option("--epoch-len", sim.epoch_len, "Counter multiplexing epoch, e.g. 10ms");
  s->add_flag("--split-wait", sim.split_wait, "Record runnable and blocked wait separately");
  s->add_flag("--dump-events", sim.dump_events, "Also write the raw event stream to events.txt");

  VerifyArgs ver;
  auto* v = app.add_subcommand("verify", "Compare a trace with the ground-truth ledger");
  v->add_option("--trace", ver.trace, "Trace file")->required()->check(CLI::ExistingFile);
  v->add_option("--ledger", ver.ledger, "Ledger file")->required()->check(CLI::ExistingFile);
  v->add_option("--out", ver.out, "Optional run directory for the verdict");

  AnalyzeArgs an;
  auto* z = app.add_subcommand("analyze", "Rank events by impact on tail latency");
  z->add_option("--trace", an.trace, "Trace file")->required()->check(CLI::ExistingFile);
  z->add_option("--catalog", an.catalog, "Event catalog (JSON)")->required()->check(CLI::ExistingFile);
  z->add_option("--config", an.config, "Analysis settings, or a scenario with an analysis section")
      ->check(CLI::ExistingFile);
  z->add_option("--out", an.out, "Run directory")->required();
  z->add_option("--p-target", an.p_target, "Tail percentile");
  z->add_option("--segments", an.segments, "Split into N segments of equal task count");
  z->add_option("--segment-duration", an.segment_duration, "Split by task begin time, e.g. 20ms");
  z->add_option("--segment-tasks", an.segment_tasks, "Split every N tasks");

  PlanArgs pl;
  auto* p = app.add_subcommand("plan", "Estimate how many requests a recording needs");
  p->add_option("--p-tail", pl.p_tail, "Probability a request is in the tail")->capture_default_str();
  p->add_option("--p-req", pl.p_req, "Selection rate")->capture_default_str();
  p->add_option("--p-event", pl.p_event, "Coverage of the cause's counter");
  p->add_option("--counters", pl.counters, "Configurable counters in the catalog (M)");
  p->add_option("--slots", pl.slots, "Configurable counter slots per epoch (k)");
  p->add_option("--occurrences", pl.occurrences, "Observations wanted")->capture_default_str();
  p->add_option("--throughput", pl.throughput, "Requests per second");
  p->add_option("--out", pl.out, "Optional run directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInvalid;
  }

  try {
    if (*s) return cmd_simulate(sim);
    if (*v) return cmd_verify(ver);
    if (*z) return cmd_analyze(an);
    if (*p) return cmd_plan(pl);
  } catch (const tailvar::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  }
  return kInvalid;
}
