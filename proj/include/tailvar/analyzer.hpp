// Copyright 2026 The tailvar Authors
// SPDX-License-Identifier: Apache-2.0

// Offline attribution of tail latency to recorded events.
//
// For every event the analyzer picks a threshold percentile from the shape
// of the event's CDF, calls tasks above it "high", and measures how much
// the tail latency drops when those tasks are removed (the impact value).
// Group ordering and parent-child proportionality then demote events that
// are only symptoms of another event.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "tailvar/regression.hpp"
#include "tailvar/segments.hpp"
#include "tailvar/stats.hpp"
#include "tailvar/trace_model.hpp"

namespace tailvar {

struct AnalysisConfig {
  double p_target = 0.99;
  std::size_t cdf_ranges = 1000;
  double merge_r2 = 0.95;
  double prop_r2 = 0.99;
  std::size_t min_tasks_per_event = 100;
  // Unresolved pairs at or above this Jaccard value are reported as notes.
  double note_jaccard = 0.5;
  // compare_segments flags a rank change only among the top this-many events.
  std::size_t flag_top_k = 5;

  void validate() const {
    if (!(p_target > 0 && p_target <= 1)) throw ConfigError("p_target must be in (0, 1]");
    if (cdf_ranges < 2) throw ConfigError("cdf_ranges must be >= 2");
    if (!(merge_r2 > 0 && merge_r2 <= 1)) throw ConfigError("merge_r2 must be in (0, 1]");
    if (!(prop_r2 > 0 && prop_r2 <= 1)) throw ConfigError("prop_r2 must be in (0, 1]");
  }
};

// ---------------------------------------------------------------------------
// Knee detection
// ---------------------------------------------------------------------------

struct KneePoint {
  double percentile = 0;
  double value = 0;
};

struct CdfFit {
  std::vector<KneePoint> knees;
  std::size_t lines = 0;  // fitted lines after merging
};

namespace detail {

// r^2 of one constituent under the pooled line, with the residual baseline
// taken about the pooled mean so that a flat range has a meaningful score.
inline double constituent_r2(const RegressionSummary& part, double intercept, double slope,
                             double pooled_mean) {
  const double sse = part.sse(intercept, slope);
  const double sst = part.sse(pooled_mean, 0.0);
  const double eps = 1e-10 * std::max(1.0, part.n);
  if (sst <= eps) return sse <= eps ? 1.0 : 0.0;
  return 1.0 - sse / sst;
}

inline bool can_merge(const RegressionSummary& a, const RegressionSummary& b, double threshold) {
  const RegressionSummary pooled = merged(a, b);
  const double slope = pooled.slope();
  const double intercept = pooled.intercept();
  const double mean = pooled.sy / pooled.n;
  return constituent_r2(a, intercept, slope, mean) >= threshold &&
         constituent_r2(b, intercept, slope, mean) >= threshold;
}

}  // namespace detail

/// Piecewise-linear fit of the CDF (x = percentile, y = value) by greedy
/// merging of N equal-percentile ranges. Knees are the percentiles where one
/// fitted line ends and the next begins.
inline CdfFit fit_cdf_steps(std::span<const double> values, const AnalysisConfig& config) {
  const std::size_t n = values.size();
  const std::size_t ranges = config.cdf_ranges;
  if (ranges < 2) throw ConfigError("cdf_ranges must be >= 2");
  if (n < ranges)
    throw TooFewSamples("CDF fit needs at least " + std::to_string(ranges) + " values, got " +
                        std::to_string(n));
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted.front();
  const double span = sorted.back() - lo;

  struct Piece {
    RegressionSummary summary;
    std::size_t last;  // index of the last point
  };
  std::vector<Piece> pieces;
  pieces.reserve(ranges);
  for (std::size_t r = 0; r < ranges; ++r) {
    const std::size_t begin = r * n / ranges;
    const std::size_t end = (r + 1) * n / ranges;
    Piece p{{}, end - 1};
    for (std::size_t i = begin; i < end; ++i) {
      const double x = static_cast<double>(i + 1) / static_cast<double>(n);
      const double y = span > 0 ? (sorted[i] - lo) / span : 0.0;
      p.summary.add(x, y);
    }
    pieces.push_back(p);
  }

  bool merged_any = true;
  while (merged_any) {
    merged_any = false;
    std::size_t i = 0;
    while (i + 1 < pieces.size()) {
      if (detail::can_merge(pieces[i].summary, pieces[i + 1].summary, config.merge_r2)) {
        pieces[i].summary.merge(pieces[i + 1].summary);
        pieces[i].last = pieces[i + 1].last;
        pieces.erase(pieces.begin() + static_cast<std::ptrdiff_t>(i) + 1);
        merged_any = true;
      } else {
        ++i;
      }
    }
  }

  CdfFit fit;
  fit.lines = pieces.size();
  for (std::size_t i = 0; i + 1 < pieces.size(); ++i) {
    const std::size_t last = pieces[i].last;
    fit.knees.push_back({static_cast<double>(last + 1) / static_cast<double>(n), sorted[last]});
  }
  return fit;
}

/// The largest knee strictly below p_target, or p_target when there is none.
inline double choose_threshold(const std::vector<KneePoint>& knees, double p_target) {
  double best = -1;
  for (const auto& k : knees)
    if (k.percentile < p_target && k.percentile > best) best = k.percentile;
  return best >= 0 ? best : p_target;
}

/// Threshold for a value population. Populations smaller than the range
/// count are fitted with one range per value.
inline double choose_threshold(std::span<const double> values, const AnalysisConfig& config) {
  if (values.size() < 2) return config.p_target;
  AnalysisConfig c = config;
  c.cdf_ranges = std::min(config.cdf_ranges, values.size());
  return choose_threshold(fit_cdf_steps(values, c).knees, config.p_target);
}

// ---------------------------------------------------------------------------
// Impact value
// ---------------------------------------------------------------------------

/// Indices of the values strictly above their p_threshold percentile.
inline std::vector<std::size_t> high_indices(std::span<const double> values, double p_threshold) {
  std::vector<std::size_t> out;
  if (values.empty()) return out;
  const double cut = percentile(values, p_threshold);
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] > cut) out.push_back(i);
  return out;
}

/// (Var(T) - Var(T minus high)) / Var(T) with Var the p_target latency.
/// `high` holds sorted indices into `latencies`.
inline double impact_from_high_set(std::span<const double> latencies, const std::vector<std::size_t>& high,
                                   double p_target) {
  if (high.empty() || latencies.empty()) return 0.0;
  const double var = percentile(latencies, p_target);
  if (var == 0.0) return 0.0;
  std::vector<double> rest;
  rest.reserve(latencies.size() - high.size());
  std::size_t h = 0;
  for (std::size_t i = 0; i < latencies.size(); ++i) {
    if (h < high.size() && high[h] == i) {
      ++h;
      continue;
    }
    rest.push_back(latencies[i]);
  }
  if (rest.empty()) return 0.0;
  return (var - percentile(std::span<const double>(rest), p_target)) / var;
}

/// One event's values with the latency of each carrying task.
struct EventColumn {
  std::vector<std::size_t> rows;  // record indices, ascending
  std::vector<double> values;
  std::vector<double> latencies;
};

inline EventColumn event_column(std::span<const TaskRecord> records, std::string_view event) {
  EventColumn col;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (auto v = records[i].value(event)) {
      col.rows.push_back(i);
      col.values.push_back(static_cast<double>(*v));
      col.latencies.push_back(static_cast<double>(records[i].latency()));
    }
  }
  return col;
}

struct ImpactResult {
  std::size_t n_tasks = 0;
  double p_threshold = 0;
  double value_threshold = 0;
  std::vector<std::size_t> high;  // indices into the event's column
  double impact = 0;
};

inline ImpactResult impact_of_column(const EventColumn& col, const AnalysisConfig& config) {
  ImpactResult r;
  r.n_tasks = col.values.size();
  r.p_threshold = choose_threshold(col.values, config);
  r.value_threshold = percentile(std::span<const double>(col.values), r.p_threshold);
  r.high = high_indices(col.values, r.p_threshold);
  r.impact = impact_from_high_set(col.latencies, r.high, config.p_target);
  return r;
}

/// Impact value of one event over the records that carry it.
inline double impact_value(std::string_view event, std::span<const TaskRecord> records,
                           const AnalysisConfig& config) {
  const auto col = event_column(records, event);
  if (col.values.size() < std::max<std::size_t>(1, config.min_tasks_per_event))
    throw InsufficientData("event '" + std::string(event) + "' recorded by " +
                           std::to_string(col.values.size()) + " tasks");
  return impact_of_column(col, config).impact;
}

// ---------------------------------------------------------------------------
// Correlation
// ---------------------------------------------------------------------------

/// Jaccard index of the two events' high sets, both recomputed on the tasks
/// that carry both events. nullopt when no task carries both.
inline std::optional<double> jaccard_correlation(std::string_view e1, std::string_view e2,
                                                 std::span<const TaskRecord> records,
                                                 const AnalysisConfig& config) {
  std::vector<double> v1, v2;
  for (const auto& r : records) {
    auto a = r.value(e1);
    auto b = r.value(e2);
    if (a && b) {
      v1.push_back(static_cast<double>(*a));
      v2.push_back(static_cast<double>(*b));
    }
  }
  if (v1.empty()) return std::nullopt;
  const auto h1 = high_indices(v1, choose_threshold(v1, config));
  const auto h2 = high_indices(v2, choose_threshold(v2, config));
  if (h1.empty() && h2.empty()) return 0.0;
  std::vector<std::size_t> both;
  std::set_intersection(h1.begin(), h1.end(), h2.begin(), h2.end(), std::back_inserter(both));
  const std::size_t uni = h1.size() + h2.size() - both.size();
  return static_cast<double>(both.size()) / static_cast<double>(uni);
}

// ---------------------------------------------------------------------------
// Causal rules and reports
// ---------------------------------------------------------------------------

enum class FilterRule : std::uint8_t { None, Rule1, Rule2 };

struct EventAnalysis {
  std::string event;
  EventGroup group = EventGroup::OTHER;
  std::size_t n_tasks = 0;
  double p_threshold = 0;
  double value_threshold = 0;
  std::vector<std::string> high_set;  // task ids
  double impact = 0;
  double adjusted_impact = 0;
  FilterRule filter = FilterRule::None;
  std::string filter_cause;  // Rule1: deducted cause. Rule2: parent.
  std::vector<std::pair<std::string, double>> correlations;  // jaccard desc, then name
  double value_p50 = 0;
  double value_p99 = 0;
};

struct ImpactReport {
  std::size_t segment_index = 0;
  double p_target = 0;
  SegmentStats latency;
  std::vector<EventAnalysis> ranked;    // by adjusted impact desc, then name
  std::vector<EventAnalysis> filtered;  // removed by Rule 2, name order
  std::vector<std::string> notes;
};

/// Rank of a group in the Rule 1 order INST > CACHE > CYCLE; -1 otherwise.
inline int rule1_level(EventGroup g) {
  switch (g) {
    case EventGroup::INST: return 2;
    case EventGroup::CACHE: return 1;
    case EventGroup::CYCLE: return 0;
    default: return -1;
  }
}

inline EventGroup group_of(const EventCatalog& catalog, std::string_view event) {
  if (const auto* spec = catalog.lookup(event)) return spec->group;
  for (const auto& k : EventCatalog::standard_kernel_events())
    if (k.name == event) return EventGroup::KERNEL;
  if (event == kernel_events::kSchedRunnableLen || event == kernel_events::kSchedBlockedLen)
    return EventGroup::KERNEL;
  return EventGroup::OTHER;
}

/// Memoized pairwise Jaccard over one record set.
class CorrelationTable {
 public:
  CorrelationTable(std::span<const TaskRecord> records, const AnalysisConfig& config)
      : records_(records), config_(config) {}

  std::optional<double> get(const std::string& a, const std::string& b) {
    const auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    auto v = jaccard_correlation(key.first, key.second, records_, config_);
    cache_.emplace(key, v);
    return v;
  }

 private:
  std::span<const TaskRecord> records_;
  AnalysisConfig config_;
  std::map<std::pair<std::string, std::string>, std::optional<double>> cache_;
};

/// Deducts from each CACHE/CYCLE event the largest impact*jaccard among its
/// higher-group causes. Deductions use the causes' unadjusted impacts and
/// are never negative.
inline void apply_rule1(std::vector<EventAnalysis>& analyses, CorrelationTable& table) {
  for (auto& a : analyses) a.adjusted_impact = a.impact;
  for (auto& e2 : analyses) {
    const int level = rule1_level(e2.group);
    if (level < 0) continue;
    double deduction = 0;
    std::string cause;
    for (const auto& e1 : analyses) {
      if (rule1_level(e1.group) <= level) continue;
      const auto j = table.get(e1.event, e2.event);
      if (!j) continue;
      const double d = e1.impact * *j;
      if (d > deduction) {
        deduction = d;
        cause = e1.event;
      }
    }
    if (deduction > 0) {
      e2.adjusted_impact = e2.impact - deduction;
      e2.filter = FilterRule::Rule1;
      e2.filter_cause = cause;
    }
  }
}

/// Through-origin fit parent = a * child and its uncentered r^2.
struct ProportionalFit {
  std::size_t n = 0;
  double alpha = 0;
  double r_squared = 0;
};

inline ProportionalFit proportional_fit(std::span<const TaskRecord> records, std::string_view child,
                                        std::string_view parent) {
  ProportionalFit f;
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& r : records) {
    auto x = r.value(child);
    auto y = r.value(parent);
    if (!x || !y) continue;
    const double xv = static_cast<double>(*x), yv = static_cast<double>(*y);
    sxx += xv * xv;
    sxy += xv * yv;
    syy += yv * yv;
    ++f.n;
  }
  if (f.n == 0 || sxx <= 0 || syy <= 0) return f;
  f.alpha = sxy / sxx;
  const double sse = std::max(0.0, syy - sxy * sxy / sxx);
  f.r_squared = 1.0 - sse / syy;
  return f;
}

/// Marks children that are proportional to their parent. Returns notes for
/// pairs that could not be evaluated.
inline std::vector<std::string> apply_rule2(std::vector<EventAnalysis>& analyses,
                                            std::span<const TaskRecord> records,
                                            const EventCatalog& catalog, const AnalysisConfig& config) {
  std::vector<std::string> notes;
  auto find = [&](const std::string& name) -> EventAnalysis* {
    for (auto& a : analyses)
      if (a.event == name) return &a;
    return nullptr;
  };
  for (const auto& pc : catalog.parent_child()) {
    auto* child = find(pc.child);
    if (!child || !find(pc.parent)) continue;
    const auto fit = proportional_fit(records, pc.child, pc.parent);
    if (fit.n < std::max<std::size_t>(1, config.min_tasks_per_event)) {
      notes.push_back("rule 2 not evaluable for " + pc.child + " -> " + pc.parent + ": " +
                      std::to_string(fit.n) + " co-recorded tasks");
      continue;
    }
    if (fit.alpha > 0 && fit.r_squared > config.prop_r2) {
      child->filter = FilterRule::Rule2;
      child->filter_cause = pc.parent;
    }
  }
  return notes;
}

namespace detail {

inline std::string fmt(double v, int precision = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

}  // namespace detail

/// Full per-segment analysis: thresholds, impacts, Rule 1, Rule 2, ranking.
inline ImpactReport analyze_segment(std::span<const TaskRecord> records, const EventCatalog& catalog,
                                    const AnalysisConfig& config, std::size_t segment_index = 0) {
  config.validate();
  if (records.empty()) throw EmptyInput("no records to analyze");
  ImpactReport report;
  report.segment_index = segment_index;
  report.p_target = config.p_target;
  report.latency = segment_stats(records, segment_index);

  std::map<std::string, bool, std::less<>> names;
  for (const auto& r : records)
    for (const auto& [k, v] : r.values) names.emplace(k, true);

  std::vector<EventAnalysis> analyses;
  for (const auto& [name, unused] : names) {
    const EventGroup group = group_of(catalog, name);
    if (group == EventGroup::UOP || group == EventGroup::OTHER) {
      report.notes.push_back(name + ": group " + std::string(to_string(group)) + " is not analyzed");
      continue;
    }
    const auto col = event_column(records, name);
    if (col.values.size() < std::max<std::size_t>(1, config.min_tasks_per_event)) {
      report.notes.push_back(name + ": insufficient data (" + std::to_string(col.values.size()) +
                             " tasks)");
      continue;
    }
    const auto res = impact_of_column(col, config);
    EventAnalysis a;
    a.event = name;
    a.group = group;
    a.n_tasks = res.n_tasks;
    a.p_threshold = res.p_threshold;
    a.value_threshold = res.value_threshold;
    for (auto i : res.high) a.high_set.push_back(records[col.rows[i]].task_id);
    a.impact = res.impact;
    a.adjusted_impact = res.impact;
    std::vector<double> sorted = col.values;
    std::sort(sorted.begin(), sorted.end());
    a.value_p50 = percentile_sorted(std::span<const double>(sorted), 0.5);
    a.value_p99 = percentile_sorted(std::span<const double>(sorted), 0.99);
    analyses.push_back(std::move(a));
  }

  CorrelationTable table(records, config);
  apply_rule1(analyses, table);
  for (auto& n : apply_rule2(analyses, records, catalog, config)) report.notes.push_back(std::move(n));

  auto proportional_pair = [&](const std::string& a, const std::string& b) {
    for (const auto& pc : catalog.parent_child())
      if ((pc.child == a && pc.parent == b) || (pc.child == b && pc.parent == a)) return true;
    return false;
  };
  for (std::size_t i = 0; i < analyses.size(); ++i) {
    for (std::size_t j = i + 1; j < analyses.size(); ++j) {
      auto& a = analyses[i];
      auto& b = analyses[j];
      const auto jac = table.get(a.event, b.event);
      if (!jac) continue;
      if (*jac > 0) {
        a.correlations.emplace_back(b.event, *jac);
        b.correlations.emplace_back(a.event, *jac);
      }
      const int la = rule1_level(a.group), lb = rule1_level(b.group);
      const bool rule1 = la >= 0 && lb >= 0 && la != lb;
      if (*jac >= config.note_jaccard && !rule1 && !proportional_pair(a.event, b.event))
        report.notes.push_back("correlated without a causal rule: " + a.event + " ~ " + b.event +
                               " (jaccard " + detail::fmt(*jac, 3) + ")");
    }
  }
  for (auto& a : analyses)
    std::sort(a.correlations.begin(), a.correlations.end(), [](const auto& x, const auto& y) {
      return x.second != y.second ? x.second > y.second : x.first < y.first;
    });

  for (auto& a : analyses)
    (a.filter == FilterRule::Rule2 ? report.filtered : report.ranked).push_back(std::move(a));
  std::sort(report.ranked.begin(), report.ranked.end(), [](const EventAnalysis& x, const EventAnalysis& y) {
    return x.adjusted_impact != y.adjusted_impact ? x.adjusted_impact > y.adjusted_impact
                                                  : x.event < y.event;
  });
  return report;
}

/// 1-based rank of an event in a report, or 0 when it is not ranked.
inline std::size_t rank_of(const ImpactReport& report, std::string_view event) {
  for (std::size_t i = 0; i < report.ranked.size(); ++i)
    if (report.ranked[i].event == event) return i + 1;
  return 0;
}

inline const EventAnalysis* find_analysis(const ImpactReport& report, std::string_view event) {
  for (const auto& a : report.ranked)
    if (a.event == event) return &a;
  for (const auto& a : report.filtered)
    if (a.event == event) return &a;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Cross-segment comparison
// ---------------------------------------------------------------------------

struct EventAcrossSegments {
  std::string event;
  std::vector<std::optional<double>> adjusted_impact;  // per report
  std::vector<std::optional<double>> value_p50;
  std::vector<std::optional<double>> value_p99;
  std::size_t rank_in_max = 0;     // 0 = not ranked
  std::size_t rank_in_median = 0;
  bool flagged = false;
  // Spearman correlation across segments of segment p99 latency with the
  // event's p99 and p50 values.
  double rho_p99 = 0;
  double rho_p50 = 0;
};

struct SegmentComparison {
  std::size_t max_segment = 0;  // positions in the input list
  std::size_t median_segment = 0;
  std::size_t min_segment = 0;
  std::vector<SegmentStats> latency;
  std::vector<EventAcrossSegments> events;  // name order

  const EventAcrossSegments* find(std::string_view event) const {
    for (const auto& e : events)
      if (e.event == event) return &e;
    return nullptr;
  }
};

inline SegmentComparison compare_segments(const std::vector<ImpactReport>& reports,
                                          const AnalysisConfig& config = {}) {
  if (reports.size() < 2) throw InsufficientData("segment comparison needs at least two reports");
  SegmentComparison out;
  std::vector<std::size_t> order(reports.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i] = i;
    out.latency.push_back(reports[i].latency);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return reports[a].latency.p99 < reports[b].latency.p99;
  });
  out.min_segment = order.front();
  out.max_segment = order.back();
  out.median_segment = order[(order.size() - 1) / 2];

  std::map<std::string, bool, std::less<>> names;
  for (const auto& r : reports) {
    for (const auto& a : r.ranked) names.emplace(a.event, true);
    for (const auto& a : r.filtered) names.emplace(a.event, true);
  }
  std::vector<double> lat_p99;
  for (const auto& r : reports) lat_p99.push_back(static_cast<double>(r.latency.p99));

  for (const auto& [name, unused] : names) {
    EventAcrossSegments e;
    e.event = name;
    std::vector<double> xs, p99s, p50s;
    for (const auto& r : reports) {
      const auto* a = find_analysis(r, name);
      e.adjusted_impact.push_back(a ? std::optional<double>(a->adjusted_impact) : std::nullopt);
      e.value_p50.push_back(a ? std::optional<double>(a->value_p50) : std::nullopt);
      e.value_p99.push_back(a ? std::optional<double>(a->value_p99) : std::nullopt);
      if (a) {
        xs.push_back(static_cast<double>(r.latency.p99));
        p99s.push_back(a->value_p99);
        p50s.push_back(a->value_p50);
      }
    }
    e.rank_in_max = rank_of(reports[out.max_segment], name);
    e.rank_in_median = rank_of(reports[out.median_segment], name);
    const auto top = [&](std::size_t rank) { return rank > 0 && rank <= config.flag_top_k; };
    e.flagged = e.rank_in_max != e.rank_in_median && (top(e.rank_in_max) || top(e.rank_in_median));
    e.rho_p99 = spearman(xs, p99s);
    e.rho_p50 = spearman(xs, p50s);
    out.events.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report output
// ---------------------------------------------------------------------------

inline std::string_view to_string(FilterRule f) {
  switch (f) {
    case FilterRule::None: return "-";
    case FilterRule::Rule1: return "rule1";
    case FilterRule::Rule2: return "rule2";
  }
  return "?";
}

/// Machine-readable report: one event per line, tab separated.
inline void write_report_tsv(std::ostream& out, const ImpactReport& report) {
  out << "# segment=" << report.segment_index << " tasks=" << report.latency.task_count
      << " p_target=" << detail::fmt(report.p_target, 4) << " p50=" << report.latency.p50
      << " p99=" << report.latency.p99 << " cov=" << detail::fmt(report.latency.cov) << '\n';
  out << "rank\tevent\tgroup\tn\tp_threshold\timpact\tadjusted_impact\tfilter\tcorrelations\n";
  auto line = [&](const EventAnalysis& a, std::size_t rank) {
    out << (rank ? std::to_string(rank) : std::string("-")) << '\t' << a.event << '\t'
        << to_string(a.group) << '\t' << a.n_tasks << '\t' << detail::fmt(a.p_threshold, 4) << '\t'
        << detail::fmt(a.impact) << '\t' << detail::fmt(a.adjusted_impact) << '\t' << to_string(a.filter);
    if (a.filter != FilterRule::None) out << ':' << a.filter_cause;
    out << '\t';
    for (std::size_t i = 0; i < std::min<std::size_t>(3, a.correlations.size()); ++i)
      out << (i ? "," : "") << a.correlations[i].first << '=' << detail::fmt(a.correlations[i].second, 3);
    if (a.correlations.empty()) out << '-';
    out << '\n';
  };
  for (std::size_t i = 0; i < report.ranked.size(); ++i) line(report.ranked[i], i + 1);
  for (const auto& a : report.filtered) line(a, 0);
}

/// Human-readable report.
inline void write_report_text(std::ostream& out, const ImpactReport& report) {
  const auto& s = report.latency;
  out << "segment " << report.segment_index << ": " << s.task_count << " tasks, latency p50 " << s.p50
      << " ns, p90 " << s.p90 << " ns, p99 " << s.p99 << " ns, CoV " << detail::fmt(s.cov, 4) << '\n';
  out << "events ranked by adjusted impact (p_target " << detail::fmt(report.p_target, 4) << "):\n";
  for (std::size_t i = 0; i < report.ranked.size(); ++i) {
    const auto& a = report.ranked[i];
    out << "  " << (i + 1) << ". " << a.event << " [" << to_string(a.group) << "] impact "
        << detail::fmt(a.impact, 4) << ", adjusted " << detail::fmt(a.adjusted_impact, 4);
    if (a.filter == FilterRule::Rule1) out << " (deducted for " << a.filter_cause << ")";
    out << ", high above p" << detail::fmt(a.p_threshold * 100, 2) << " (" << a.high_set.size()
        << " tasks)\n";
  }
  if (!report.filtered.empty()) {
    out << "filtered as proportional to a parent event:\n";
    for (const auto& a : report.filtered) out << "  " << a.event << " -> " << a.filter_cause << '\n';
  }
  if (!report.notes.empty()) {
    out << "notes:\n";
    for (const auto& n : report.notes) out << "  " << n << '\n';
  }
}

/// Cross-segment table: one row per (segment, event).
inline void write_comparison_tsv(std::ostream& out, const SegmentComparison& cmp) {
  out << "# max_segment=" << cmp.latency[cmp.max_segment].segment_index
      << " median_segment=" << cmp.latency[cmp.median_segment].segment_index
      << " min_segment=" << cmp.latency[cmp.min_segment].segment_index << '\n';
  out << "segment\ttasks\tlatency_p50\tlatency_p99\tcov\tevent\tadjusted_impact\tvalue_p50\tvalue_p99\n";
  auto opt = [](const std::optional<double>& v) { return v ? detail::fmt(*v) : std::string("NA"); };
  for (std::size_t s = 0; s < cmp.latency.size(); ++s) {
    const auto& st = cmp.latency[s];
    for (const auto& e : cmp.events) {
      out << st.segment_index << '\t' << st.task_count << '\t' << st.p50 << '\t' << st.p99 << '\t'
          << detail::fmt(st.cov) << '\t' << e.event << '\t' << opt(e.adjusted_impact[s]) << '\t'
          << opt(e.value_p50[s]) << '\t' << opt(e.value_p99[s]) << '\n';
    }
  }
}

inline void write_comparison_summary(std::ostream& out, const SegmentComparison& cmp) {
  out << "event\trank_in_max\trank_in_median\tflagged\trho_p99\trho_p50\n";
  for (const auto& e : cmp.events)
    out << e.event << '\t' << e.rank_in_max << '\t' << e.rank_in_median << '\t' << (e.flagged ? "yes" : "no")
        << '\t' << detail::fmt(e.rho_p99, 4) << '\t' << detail::fmt(e.rho_p50, 4) << '\n';
}

}  // namespace tailvar
