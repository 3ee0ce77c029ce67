#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "levk/seg_metrics.hpp"
#include "levk/taxonomy.hpp"

namespace levk {

enum class Task { IO, CW, CW_OOD };
inline constexpr Task kAllTasks[] = {Task::IO, Task::CW, Task::CW_OOD};
std::string_view to_string(Task task);
Task parse_task(std::string_view text);

/// True and false ground-truth class sets of one task for one predicted class.
struct TaskSpec {
  Task task = Task::CW;
  ClassId predicted = 0;
  std::vector<bool> positive;
  std::vector<bool> negative;

  bool is_positive(ClassId gt) const { return gt >= 0 && static_cast<std::size_t>(gt) < positive.size() && positive[gt]; }
  bool is_negative(ClassId gt) const { return gt >= 0 && static_cast<std::size_t>(gt) < negative.size() && negative[gt]; }
};

TaskSpec resolve_task(Task task, ClassId predicted, const ClassTable& table);

struct EvalRecord {
  ClassId gt = 0;
  ClassId pd = 0;
  float g = 0.0f;
};

/// 1 (accept) iff g > delta.
constexpr int decide(double g, double delta) { return g > delta ? 1 : 0; }

struct DetectionCounts {
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::uint64_t total() const { return tp + tn + fp + fn; }
};

/// Counts over records with pd == spec.predicted whose gt falls in either set.
DetectionCounts detection_counts(std::span<const EvalRecord> records, const TaskSpec& spec, double delta);

struct Rates {
  std::optional<double> tpr;
  std::optional<double> fpr;
};
Rates tpr_fpr(const DetectionCounts& counts);

struct RocCurve {
  struct Point {
    double min_score;  // accepted when g >= min_score; +inf for the origin
    double fpr;
    double tpr;
  };
  std::vector<Point> points;
  std::optional<double> auroc;
  std::uint64_t positives = 0;
  std::uint64_t negatives = 0;
};

/// Sweeps every distinct trust value; trapezoidal area, so ties earn half credit.
RocCurve roc_auroc(std::span<const EvalRecord> records, const TaskSpec& spec);

enum class Band { correct, wrong, ood };
std::string_view to_string(Band band);

struct TsdMatrix {
  ClassId predicted = 0;
  std::vector<double> edges;     // n+1 values, 0 .. 1
  std::vector<ClassId> rows;     // ground-truth classes in band order
  std::vector<Band> bands;       // band of each row
  std::vector<bool> row_present; // false when |gt = r| == 0
  Eigen::MatrixXd q;             // rows.size() x n
};

/// Uniform edges k/n, k = 0..n.
std::vector<double> uniform_edges(int n);
/// Index i with edges[i] < g <= edges[i+1]; g == edges[0] lands in bin 0.
std::size_t tsd_bin(const std::vector<double>& edges, double g);

TsdMatrix tsd_matrix(std::span<const EvalRecord> records, ClassId predicted, const ConfusionMatrix& cm,
                     const std::vector<double>& edges, const ClassTable& table);

/// wTP / (wTP + wFP) with every count normalized by |gt = r|.
std::optional<double> weighted_precision_at(std::span<const EvalRecord> records, const TaskSpec& spec,
                                            double delta, const ConfusionMatrix& cm);

struct ReportConfig {
  std::vector<Task> tasks{Task::IO, Task::CW, Task::CW_OOD};
  int delta_grid = 10;
  double delta = 0.9;
  int tsd_bins = 10;
};

struct ClassTaskResult {
  Task task = Task::CW;
  RocCurve roc;
  std::vector<DetectionCounts> counts;  // one per delta on the grid
  std::optional<double> wpre_at;
};

struct ClassReport {
  ClassId predicted = 0;
  std::vector<ClassTaskResult> tasks;
  TsdMatrix tsd;
};

struct TaskReport {
  std::vector<Task> tasks;
  std::vector<double> delta_grid;
  double delta = 0.9;
  ConfusionMatrix cm;
  std::vector<ClassMetric> metrics;
  std::vector<ClassReport> classes;  // ID classes in table order
};

/// Records are reordered by predicted class in place.
TaskReport task_report(std::vector<EvalRecord>& records, const ClassTable& table, const ReportConfig& config);

}  // namespace levk
