#include "levk/seg_metrics.hpp"

#include <cmath>

#include "levk/errors.hpp"

namespace levk {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : counts_(Counts::Zero(static_cast<Eigen::Index>(num_classes), static_cast<Eigen::Index>(num_classes))) {}

void ConfusionMatrix::add(ClassId gt, ClassId pd, std::uint64_t count) {
  if (gt == kIgnore) return;
  const auto n = static_cast<ClassId>(size());
  if (gt < 0 || gt >= n || pd < 0 || pd >= n)
    throw PreconditionError("class id out of range in confusion accumulation");
  counts_(gt, pd) += count;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.size() != size()) throw PreconditionError("confusion matrices differ in size");
  counts_ += other.counts_;
  return *this;
}

std::uint64_t ConfusionMatrix::gt_total(ClassId r) const { return counts_.row(r).sum(); }
std::uint64_t ConfusionMatrix::pd_total(ClassId c) const { return counts_.col(c).sum(); }
std::uint64_t ConfusionMatrix::total() const { return counts_.sum(); }

std::optional<double> ConfusionMatrix::ratio(ClassId r, ClassId c) const {
  const auto t = gt_total(r);
  if (t == 0) return std::nullopt;
  return static_cast<double>(counts_(r, c)) / static_cast<double>(t);
}

Eigen::MatrixXd ConfusionMatrix::ratios() const {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(counts_.rows(), counts_.cols());
  for (Eigen::Index r = 0; r < counts_.rows(); ++r) {
    const auto t = counts_.row(r).sum();
    if (t == 0) continue;
    p.row(r) = counts_.row(r).cast<double>() / static_cast<double>(t);
  }
  return p;
}

ConfusionMatrix confusion_matrix(std::span<const ClassId> gt, std::span<const ClassId> pd,
                                 const ClassTable& table) {
  if (gt.size() != pd.size()) throw LengthMismatch(pd.size(), gt.size());
  ConfusionMatrix cm(table.size());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == kIgnore) continue;
    if (!table.is_id(pd[i]))
      throw PreconditionError("prediction at index " + std::to_string(i) + " is not an ID class");
    cm.add(gt[i], pd[i]);
  }
  return cm;
}

std::vector<ClassMetric> class_metrics(const ConfusionMatrix& cm) {
  const Eigen::MatrixXd p = cm.ratios();
  const auto n = static_cast<ClassId>(cm.size());
  std::vector<ClassMetric> out(cm.size());
  for (ClassId c = 0; c < n; ++c) {
    ClassMetric& m = out[c];
    const double tp = static_cast<double>(cm.count(c, c));
    const double predicted = static_cast<double>(cm.pd_total(c));
    const double actual = static_cast<double>(cm.gt_total(c));
    const double fp = predicted - tp;
    const double fn = actual - tp;
    m.present = predicted > 0;
    if (actual > 0) m.rec = tp / actual;
    if (tp + fp + fn > 0) m.iou = tp / (tp + fp + fn);
    if (!m.present) continue;
    m.pre = tp / predicted;
    m.not_pre = fp / predicted;
    const double eta = p.col(c).sum();
    if (eta > 0.0) {
      m.eta = eta;
      double off = 0.0;
      for (ClassId r = 0; r < n; ++r)
        if (r != c) off += p(r, c);
      m.wpre = p(c, c) / eta;
      m.not_wpre = off / eta;
    }
  }
  return out;
}

ConfusionVectors wpr_bcr(const ConfusionMatrix& cm) {
  const Eigen::MatrixXd p = cm.ratios();
  const auto n = static_cast<ClassId>(cm.size());
  ConfusionVectors out;
  out.wpr.resize(cm.size());
  out.bcr.resize(cm.size());
  for (ClassId r = 0; r < n; ++r) {
    for (ClassId c = 0; c < n; ++c) {
      if (r == c) continue;
      if (cm.row_present(r)) out.wpr[r].emplace_back(c, p(r, c));
      if (cm.row_present(r)) out.bcr[c].emplace_back(r, p(r, c));
    }
  }
  return out;
}

LossAccumulator::LossAccumulator(const ClassTable& table)
    : table_(&table), nll_sum_(table.size(), 0.0), n_(table.size(), 0) {}

void LossAccumulator::add(const PredictionSet& set) {
  const auto columns = table_->prediction_columns(static_cast<std::size_t>(set.c));
  std::vector<int> column_of(table_->size(), -1);
  for (std::size_t k = 0; k < columns.size(); ++k) column_of[columns[k]] = static_cast<int>(k);
  for (std::size_t i = 0; i < set.n; ++i) {
    const ClassId gt = set.gt_class(i);
    if (gt == kIgnore || gt < 0 || static_cast<std::size_t>(gt) >= table_->size()) continue;
    const int col = column_of[gt];
    if (col < 0) continue;  // OOD ground truth has no output column
    const double p = set.prob_passes(i).col(col).cast<double>().mean();
    nll_sum_[gt] -= std::log(std::max(p, kProbFloor));
    ++n_[gt];
  }
}

std::vector<std::optional<double>> LossAccumulator::per_class_nll() const {
  std::vector<std::optional<double>> out(nll_sum_.size());
  for (std::size_t c = 0; c < out.size(); ++c)
    if (n_[c] > 0) out[c] = nll_sum_[c] / static_cast<double>(n_[c]);
  return out;
}

std::size_t LossAccumulator::scored_points() const {
  std::uint64_t total = 0;
  for (auto v : n_) total += v;
  return static_cast<std::size_t>(total);
}

std::optional<double> LossAccumulator::weighted_ce(std::span<const double> weights) const {
  if (weights.size() != nll_sum_.size()) throw LengthMismatch(weights.size(), nll_sum_.size());
  const auto n = scored_points();
  if (n == 0) return std::nullopt;
  double sum = 0.0;
  for (std::size_t c = 0; c < weights.size(); ++c) sum += weights[c] * nll_sum_[c];
  return sum / static_cast<double>(n);
}

std::vector<std::optional<double>> per_class_nll(const PredictionSet& set, const ClassTable& table) {
  LossAccumulator acc(table);
  acc.add(set);
  return acc.per_class_nll();
}

WeightedLoss weighted_ce(const PredictionSet& set, const ClassTable& table, std::span<const double> weights) {
  LossAccumulator acc(table);
  acc.add(set);
  const auto loss = acc.weighted_ce(weights);
  return {loss.value_or(0.0), loss.has_value()};
}

}  // namespace levk
