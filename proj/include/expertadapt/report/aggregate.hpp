#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "expertadapt/metrics/seg_metrics.hpp"
#include "expertadapt/report/stats.hpp"

namespace expertadapt::report {

/// One completed run: identity fields locating the grid cell, the mean test
/// metrics, and provenance sufficient to reproduce it.
struct RunResult {
  std::string experiment;   // "expert-matrix" | "ann-count" | "expert-count"
  std::string arm;          // "with" | "without" | "" when not applicable
  int train_expert = 0;     // expert-matrix row; 0 otherwise
  int count = 0;            // ann-count n / expert-count k; 0 otherwise
  int replicate = 0;        // repetition index for expert-matrix runs
  std::vector<int> combo;   // pretraining expert combination; empty if none
  int sampling_way = 0;     // 1-based way index; 0 when not applicable
  int new_expert = 0;       // evaluation reference expert
  metrics::MetricTriple metrics;
  int undefined_count = 0;  // test cases excluded from surface means
  std::string config_hash;
  std::uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const RunResult& r) {
  j = nlohmann::json{{"experiment", r.experiment},
                     {"arm", r.arm},
                     {"train_expert", r.train_expert},
                     {"count", r.count},
                     {"replicate", r.replicate},
                     {"combo", r.combo},
                     {"sampling_way", r.sampling_way},
                     {"new_expert", r.new_expert},
                     {"dice", r.metrics.dice},
                     {"assd", r.metrics.assd},
                     {"hd95", r.metrics.hd95},
                     {"surface_defined", r.metrics.surface_defined},
                     {"undefined_count", r.undefined_count},
                     {"config_hash", r.config_hash},
                     {"seed", r.seed}};
}

inline void from_json(const nlohmann::json& j, RunResult& r) {
  j.at("experiment").get_to(r.experiment);
  j.at("arm").get_to(r.arm);
  j.at("train_expert").get_to(r.train_expert);
  j.at("count").get_to(r.count);
  j.at("replicate").get_to(r.replicate);
  j.at("combo").get_to(r.combo);
  j.at("sampling_way").get_to(r.sampling_way);
  j.at("new_expert").get_to(r.new_expert);
  j.at("dice").get_to(r.metrics.dice);
  j.at("assd").get_to(r.metrics.assd);
  j.at("hd95").get_to(r.metrics.hd95);
  j.at("surface_defined").get_to(r.metrics.surface_defined);
  j.at("undefined_count").get_to(r.undefined_count);
  j.at("config_hash").get_to(r.config_hash);
  j.at("seed").get_to(r.seed);
}

/// Per-way statistics after averaging over expert combinations: one value
/// per sampling way for each metric.
struct AggregatedResult {
  std::vector<int> ways;                  // ascending
  std::vector<std::vector<int>> combos;   // distinct combos, ascending
  std::vector<double> dice, assd, hd95;   // indexed like `ways`
};

/// Means over combos per sampling way. The runs must form a complete
/// (combo x way) grid with no duplicates; the error lists missing cells.
inline AggregatedResult aggregate(const std::vector<RunResult>& runs) {
  if (runs.empty()) throw DataError("aggregate: no runs given");

  std::set<int> way_set;
  std::set<std::vector<int>> combo_set;
  for (const auto& r : runs) {
    way_set.insert(r.sampling_way);
    combo_set.insert(r.combo);
  }

  AggregatedResult out;
  out.ways.assign(way_set.begin(), way_set.end());
  out.combos.assign(combo_set.begin(), combo_set.end());

  std::map<std::pair<int, std::vector<int>>, const RunResult*> cell;
  for (const auto& r : runs) {
    auto key = std::make_pair(r.sampling_way, r.combo);
    if (cell.count(key))
      throw DataError(detail::strprintf("aggregate: duplicate cell (way %d)", r.sampling_way));
    cell[key] = &r;
  }

  std::string missing;
  for (int way : out.ways)
    for (const auto& combo : out.combos)
      if (!cell.count({way, combo})) {
        missing += detail::strprintf(" (way %d, combo {", way);
        for (size_t i = 0; i < combo.size(); ++i)
          missing += detail::strprintf(i ? ",%d" : "%d", combo[i]);
        missing += "})";
      }
  if (!missing.empty()) throw DataError("aggregate: missing cells:" + missing);

  for (int way : out.ways) {
    double d = 0.0, a = 0.0, h = 0.0;
    for (const auto& combo : out.combos) {
      const RunResult* r = cell.at({way, combo});
      d += r->metrics.dice;
      a += r->metrics.assd;
      h += r->metrics.hd95;
    }
    const double n = static_cast<double>(out.combos.size());
    out.dice.push_back(d / n);
    out.assd.push_back(a / n);
    out.hd95.push_back(h / n);
  }
  return out;
}

inline constexpr std::array<const char*, 3> kMetricNames{"dice", "assd", "hd95"};

enum class Direction { maximize, minimize };

/// Dice is a similarity (higher better); the surface distances are errors.
inline constexpr std::array<Direction, 3> kMetricDirections{
    Direction::maximize, Direction::minimize, Direction::minimize};

/// One comparison row: a label and, per metric, the vector of statistics
/// the significance tests run over (per sampling way, or per replicate).
struct TableRow {
  std::string label;
  std::array<std::vector<double>, 3> values;  // dice, assd, hd95
};

/// Which rows of one metric column are bold: the best-mean row plus every
/// row whose test against it is not significant at alpha.
struct ColumnSignificance {
  int best_row = -1;
  std::vector<int> bold_rows;        // ascending, always contains best_row
  std::vector<double> p_vs_best;     // per row; 1.0 for the best row itself
  std::vector<bool> degenerate;      // per row: p came from the zero-variance convention
  bool tie_on_best = false;
};

struct SignificanceReport {
  TTestKind kind = TTestKind::unpaired;
  double alpha = 0.05;
  std::array<ColumnSignificance, 3> columns;  // dice, assd, hd95
};

/// Finds, per metric, the best row by mean (direction-aware) and the rows
/// statistically indistinguishable from it. Ties on the best mean resolve
/// to the lowest row index and are noted.
inline SignificanceReport highlight(const std::vector<TableRow>& rows, TTestKind kind,
                                    double alpha = 0.05,
                                    std::array<Direction, 3> directions = kMetricDirections) {
  if (rows.size() < 2) throw DataError("highlight requires at least 2 rows");
  SignificanceReport rep;
  rep.kind = kind;
  rep.alpha = alpha;

  for (size_t m = 0; m < 3; ++m) {
    ColumnSignificance& col = rep.columns[m];
    std::vector<double> means(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
      const auto& v = rows[i].values[m];
      if (v.size() < 2) throw DataError("highlight: each row needs >= 2 values");
      double s = 0.0;
      for (double x : v) s += x;
      means[i] = s / static_cast<double>(v.size());
    }

    col.best_row = 0;
    for (size_t i = 1; i < rows.size(); ++i) {
      const bool better = directions[m] == Direction::maximize
                              ? means[i] > means[static_cast<size_t>(col.best_row)]
                              : means[i] < means[static_cast<size_t>(col.best_row)];
      if (better) col.best_row = static_cast<int>(i);
    }
    for (size_t i = 0; i < rows.size(); ++i)
      if (static_cast<int>(i) != col.best_row &&
          means[i] == means[static_cast<size_t>(col.best_row)])
        col.tie_on_best = true;

    col.p_vs_best.assign(rows.size(), 1.0);
    col.degenerate.assign(rows.size(), false);
    for (size_t i = 0; i < rows.size(); ++i) {
      if (static_cast<int>(i) == col.best_row) {
        col.bold_rows.push_back(static_cast<int>(i));
        continue;
      }
      TTestResult t = t_test(rows[i].values[m], rows[static_cast<size_t>(col.best_row)].values[m],
                             kind, alpha);
      col.p_vs_best[i] = t.p;
      col.degenerate[i] = t.degenerate;
      if (t.p >= alpha) col.bold_rows.push_back(static_cast<int>(i));
    }
    std::sort(col.bold_rows.begin(), col.bold_rows.end());
  }
  return rep;
}

/// Paired one-vs-counterpart comparison (the w/ vs w/o rule): per metric,
/// whether `row` is significantly better than `counterpart` at alpha.
struct CounterpartMark {
  std::array<bool, 3> significantly_better{false, false, false};
  std::array<double, 3> p{1.0, 1.0, 1.0};
};

inline CounterpartMark compare_counterpart(const TableRow& row, const TableRow& counterpart,
                                           double alpha = 0.05,
                                           std::array<Direction, 3> directions = kMetricDirections) {
  CounterpartMark mark;
  for (size_t m = 0; m < 3; ++m) {
    TTestResult t = t_test(row.values[m], counterpart.values[m], TTestKind::paired, alpha);
    double mean_row = 0.0, mean_cp = 0.0;
    for (double x : row.values[m]) mean_row += x;
    for (double x : counterpart.values[m]) mean_cp += x;
    mean_row /= static_cast<double>(row.values[m].size());
    mean_cp /= static_cast<double>(counterpart.values[m].size());
    const bool better = directions[m] == Direction::maximize ? mean_row > mean_cp
                                                             : mean_row < mean_cp;
    mark.p[m] = t.p;
    mark.significantly_better[m] = better && t.significant;
  }
  return mark;
}

}  // namespace expertadapt::report
