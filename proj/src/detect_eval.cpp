#include "levk/detect_eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "levk/errors.hpp"

namespace levk {

std::string_view to_string(Task task) {
  switch (task) {
    case Task::IO: return "io";
    case Task::CW: return "cw";
    case Task::CW_OOD: return "cwood";
  }
  return "?";
}

Task parse_task(std::string_view text) {
  for (Task t : kAllTasks)
    if (to_string(t) == text) return t;
  throw ConfigError("unknown task '" + std::string(text) + "'");
}

std::string_view to_string(Band band) {
  switch (band) {
    case Band::correct: return "id_correct";
    case Band::wrong: return "id_wrong";
    case Band::ood: return "ood";
  }
  return "?";
}

TaskSpec resolve_task(Task task, ClassId predicted, const ClassTable& table) {
  if (!table.is_id(predicted)) throw PreconditionError("tasks are defined for ID predicted classes only");
  TaskSpec spec;
  spec.task = task;
  spec.predicted = predicted;
  spec.positive.assign(table.size(), false);
  spec.negative.assign(table.size(), false);
  for (const auto& info : table.classes()) {
    const ClassId r = info.id;
    const bool ood = table.is_ood(r);
    switch (task) {
      case Task::IO:
        (ood ? spec.negative : spec.positive)[r] = true;
        break;
      case Task::CW:
        if (r == predicted) spec.positive[r] = true;
        else if (!ood) spec.negative[r] = true;
        break;
      case Task::CW_OOD:
        (r == predicted ? spec.positive : spec.negative)[r] = true;
        break;
    }
  }
  return spec;
}

DetectionCounts detection_counts(std::span<const EvalRecord> records, const TaskSpec& spec, double delta) {
  DetectionCounts out;
  for (const auto& rec : records) {
    if (rec.pd != spec.predicted) continue;
    const bool accept = decide(rec.g, delta) == 1;
    if (spec.is_positive(rec.gt)) {
      ++(accept ? out.tp : out.fn);
    } else if (spec.is_negative(rec.gt)) {
      ++(accept ? out.fp : out.tn);
    }
  }
  return out;
}

Rates tpr_fpr(const DetectionCounts& c) {
  Rates r;
  if (c.tp + c.fn > 0) r.tpr = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (c.fp + c.tn > 0) r.fpr = static_cast<double>(c.fp) / static_cast<double>(c.fp + c.tn);
  return r;
}

RocCurve roc_auroc(std::span<const EvalRecord> records, const TaskSpec& spec) {
  std::vector<std::pair<float, bool>> scored;
  for (const auto& rec : records) {
    if (rec.pd != spec.predicted) continue;
    if (spec.is_positive(rec.gt)) scored.emplace_back(rec.g, true);
    else if (spec.is_negative(rec.gt)) scored.emplace_back(rec.g, false);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  RocCurve roc;
  for (const auto& s : scored) ++(s.second ? roc.positives : roc.negatives);
  const double P = static_cast<double>(roc.positives);
  const double N = static_cast<double>(roc.negatives);
  roc.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  if (roc.positives == 0 || roc.negatives == 0) return roc;

  std::uint64_t tp = 0, fp = 0;
  long double twice_area = 0.0L;  // in units of count products
  for (std::size_t a = 0; a < scored.size();) {
    std::size_t b = a;
    std::uint64_t dtp = 0, dfp = 0;
    while (b < scored.size() && scored[b].first == scored[a].first) {
      ++(scored[b].second ? dtp : dfp);
      ++b;
    }
    twice_area += static_cast<long double>(dfp) * static_cast<long double>(2 * tp + dtp);
    tp += dtp;
    fp += dfp;
    roc.points.push_back({scored[a].first, static_cast<double>(fp) / N, static_cast<double>(tp) / P});
    a = b;
  }
  roc.auroc = static_cast<double>(twice_area / (2.0L * static_cast<long double>(P) * static_cast<long double>(N)));
  return roc;
}

std::vector<double> uniform_edges(int n) {
  if (n < 1) throw BadEdges("need at least one bin");
  std::vector<double> edges(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) edges[k] = static_cast<double>(k) / n;
  return edges;
}

std::size_t tsd_bin(const std::vector<double>& edges, double g) {
  const auto it = std::lower_bound(edges.begin() + 1, edges.end() - 1, g);
  return static_cast<std::size_t>(it - (edges.begin() + 1));
}

namespace {

void check_edges(const std::vector<double>& edges) {
  if (edges.size() < 2) throw BadEdges("need at least two edges");
  if (edges.front() != 0.0 || edges.back() != 1.0) throw BadEdges("edges must start at 0 and end at 1");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) throw BadEdges("edges must increase strictly");
}

}  // namespace

TsdMatrix tsd_matrix(std::span<const EvalRecord> records, ClassId predicted, const ConfusionMatrix& cm,
                     const std::vector<double>& edges, const ClassTable& table) {
  check_edges(edges);
  if (cm.size() != table.size()) throw PreconditionError("confusion matrix does not match the table");
  TsdMatrix tsd;
  tsd.predicted = predicted;
  tsd.edges = edges;
  tsd.rows.push_back(predicted);
  tsd.bands.push_back(Band::correct);
  for (ClassId r : table.id_classes()) {
    if (r == predicted) continue;
    tsd.rows.push_back(r);
    tsd.bands.push_back(Band::wrong);
  }
  for (ClassId r : table.ood_set()) {
    tsd.rows.push_back(r);
    tsd.bands.push_back(Band::ood);
  }
  std::vector<int> row_of(table.size(), -1);
  for (std::size_t k = 0; k < tsd.rows.size(); ++k) row_of[tsd.rows[k]] = static_cast<int>(k);

  const std::size_t bins = edges.size() - 1;
  Eigen::Matrix<std::uint64_t, Eigen::Dynamic, Eigen::Dynamic> hits =
      Eigen::Matrix<std::uint64_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(
          static_cast<Eigen::Index>(tsd.rows.size()), static_cast<Eigen::Index>(bins));
  for (const auto& rec : records) {
    if (rec.pd != predicted || rec.gt < 0 || static_cast<std::size_t>(rec.gt) >= table.size()) continue;
    hits(row_of[rec.gt], static_cast<Eigen::Index>(tsd_bin(edges, rec.g))) += 1;
  }
  tsd.q = Eigen::MatrixXd::Zero(hits.rows(), hits.cols());
  tsd.row_present.resize(tsd.rows.size());
  for (std::size_t k = 0; k < tsd.rows.size(); ++k) {
    const auto total = cm.gt_total(tsd.rows[k]);
    tsd.row_present[k] = total > 0;
    if (total == 0) continue;
    tsd.q.row(static_cast<Eigen::Index>(k)) =
        hits.row(static_cast<Eigen::Index>(k)).cast<double>() / static_cast<double>(total);
  }
  return tsd;
}

std::optional<double> weighted_precision_at(std::span<const EvalRecord> records, const TaskSpec& spec,
                                            double delta, const ConfusionMatrix& cm) {
  std::vector<std::uint64_t> accepted(cm.size(), 0);
  for (const auto& rec : records) {
    if (rec.pd != spec.predicted || rec.gt < 0) continue;
    if (decide(rec.g, delta)) ++accepted[rec.gt];
  }
  double wtp = 0.0, wfp = 0.0;
  for (std::size_t r = 0; r < accepted.size(); ++r) {
    if (accepted[r] == 0) continue;
    const double frac = static_cast<double>(accepted[r]) / static_cast<double>(cm.gt_total(static_cast<ClassId>(r)));
    if (spec.is_positive(static_cast<ClassId>(r))) wtp += frac;
    else if (spec.is_negative(static_cast<ClassId>(r))) wfp += frac;
  }
  if (wtp + wfp == 0.0) return std::nullopt;
  return wtp / (wtp + wfp);
}

TaskReport task_report(std::vector<EvalRecord>& records, const ClassTable& table, const ReportConfig& config) {
  TaskReport report;
  for (Task t : config.tasks) {
    if (t == Task::IO && table.ood_set().empty()) continue;
    report.tasks.push_back(t);
  }
  report.delta_grid = uniform_edges(config.delta_grid);
  report.delta = config.delta;
  const auto edges = uniform_edges(config.tsd_bins);

  report.cm = ConfusionMatrix(table.size());
  for (const auto& rec : records) report.cm.add(rec.gt, rec.pd);
  report.metrics = class_metrics(report.cm);

  std::stable_sort(records.begin(), records.end(),
                   [](const EvalRecord& a, const EvalRecord& b) { return a.pd < b.pd; });
  for (ClassId c : table.id_classes()) {
    const auto lo = std::lower_bound(records.begin(), records.end(), c,
                                     [](const EvalRecord& r, ClassId v) { return r.pd < v; });
    const auto hi = std::upper_bound(records.begin(), records.end(), c,
                                     [](ClassId v, const EvalRecord& r) { return v < r.pd; });
    const std::span<const EvalRecord> slice(records.data() + (lo - records.begin()),
                                            static_cast<std::size_t>(hi - lo));
    ClassReport cr;
    cr.predicted = c;
    for (Task t : report.tasks) {
      const auto spec = resolve_task(t, c, table);
      ClassTaskResult res;
      res.task = t;
      res.roc = roc_auroc(slice, spec);
      for (double d : report.delta_grid) res.counts.push_back(detection_counts(slice, spec, d));
      res.wpre_at = weighted_precision_at(slice, spec, config.delta, report.cm);
      cr.tasks.push_back(std::move(res));
    }
    cr.tsd = tsd_matrix(slice, c, report.cm, edges, table);
    report.classes.push_back(std::move(cr));
  }
  return report;
}

}  // namespace levk
