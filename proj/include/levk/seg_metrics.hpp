#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "levk/lidar_io.hpp"
#include "levk/taxonomy.hpp"

namespace levk {

/// Point counts |gt = r and pd = c| over all table classes.
///
/// Rows are ground truth (OOD rows included), columns predictions. Count
/// matrices merge by addition, so per-frame matrices can be reduced in any order.
class ConfusionMatrix {
 public:
  using Counts = Eigen::Matrix<std::uint64_t, Eigen::Dynamic, Eigen::Dynamic>;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t num_classes);

  /// Ignored ground truth is skipped.
  void add(ClassId gt, ClassId pd, std::uint64_t count = 1);
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);

  std::size_t size() const { return static_cast<std::size_t>(counts_.rows()); }
  const Counts& counts() const { return counts_; }
  std::uint64_t count(ClassId r, ClassId c) const { return counts_(r, c); }
  std::uint64_t gt_total(ClassId r) const;
  std::uint64_t pd_total(ClassId c) const;
  std::uint64_t total() const;
  bool row_present(ClassId r) const { return gt_total(r) > 0; }

  /// p(r,c) = count / gt_total(r); absent when the row is empty.
  std::optional<double> ratio(ClassId r, ClassId c) const;
  /// Full ratio matrix with absent rows left at zero.
  Eigen::MatrixXd ratios() const;

 private:
  Counts counts_;
};

ConfusionMatrix confusion_matrix(std::span<const ClassId> gt, std::span<const ClassId> pd,
                                 const ClassTable& table);

struct ClassMetric {
  bool present = false;  // at least one point predicted as this class
  std::optional<double> iou;
  std::optional<double> pre;
  std::optional<double> rec;
  std::optional<double> wpre;
  std::optional<double> not_pre;
  std::optional<double> not_wpre;
  std::optional<double> eta;  // column sum of p
};

std::vector<ClassMetric> class_metrics(const ConfusionMatrix& cm);

struct ConfusionVectors {
  /// Off-diagonal entries of row r of p: (predicted class, ratio).
  std::vector<std::vector<std::pair<ClassId, double>>> wpr;
  /// Off-diagonal entries of column c of p: (ground-truth class, ratio).
  std::vector<std::vector<std::pair<ClassId, double>>> bcr;
};

ConfusionVectors wpr_bcr(const ConfusionMatrix& cm);

/// Accumulates per-class NLL and weighted cross-entropy of the pass-mean
/// probabilities. Probabilities are floored at 1e-12 inside the log, so
/// losses above ~27.6 nats are clipped.
class LossAccumulator {
 public:
  static constexpr double kProbFloor = 1e-12;

  explicit LossAccumulator(const ClassTable& table);

  void add(const PredictionSet& set);

  /// -(1/N_c) sum log p_c over gt == c; absent for classes without points.
  std::vector<std::optional<double>> per_class_nll() const;
  /// -(1/N) sum w_c log p_c over all scored points; absent on an empty set.
  std::optional<double> weighted_ce(std::span<const double> weights) const;
  std::size_t scored_points() const;

 private:
  const ClassTable* table_;
  std::vector<double> nll_sum_;
  std::vector<std::uint64_t> n_;
};

std::vector<std::optional<double>> per_class_nll(const PredictionSet& set, const ClassTable& table);

struct WeightedLoss {
  double loss = 0.0;
  bool present = false;
};

WeightedLoss weighted_ce(const PredictionSet& set, const ClassTable& table, std::span<const double> weights);

}  // namespace levk
