#pragma once

// Trust scores over one point's M prediction passes.
//
// Pass matrices are M x C (one row per forward pass). All functions accept
// any Eigen expression and evaluate in the expression's scalar type.

#include <array>
#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "levk/taxonomy.hpp"

namespace levk {

enum class Method { conf = 0, du = 1, mu = 2, temp = 3, md = 4 };
inline constexpr std::array<Method, 5> kAllMethods{Method::conf, Method::du, Method::mu,
                                                   Method::temp, Method::md};
std::string_view to_string(Method method);
Method parse_method(std::string_view text);

/// Shannon entropy in nats of a probability row; 0 log 0 = 0.
template <typename Derived>
typename Derived::Scalar entropy(const Eigen::MatrixBase<Derived>& p) {
  using Scalar = typename Derived::Scalar;
  Scalar h(0);
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    const Scalar v = p.derived().coeff(k);
    if (v > Scalar(0)) h -= v * std::log(v);
  }
  return h;
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 1, Eigen::Dynamic> mean_pass(const Eigen::MatrixBase<Derived>& passes) {
  return passes.colwise().mean();
}

/// Numerically stable softmax of a logit row.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 1, Eigen::Dynamic> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Row = Eigen::Matrix<typename Derived::Scalar, 1, Eigen::Dynamic>;
  Row shifted = logits.derived().reshaped().transpose();
  shifted.array() -= shifted.maxCoeff();
  Row e = shifted.array().exp();
  return e / e.sum();
}

/// max_c of the pass-mean probability vector.
template <typename Derived>
typename Derived::Scalar softmax_confidence(const Eigen::MatrixBase<Derived>& prob_passes) {
  return mean_pass(prob_passes).maxCoeff();
}

/// Expected entropy over passes.
template <typename Derived>
typename Derived::Scalar data_uncertainty(const Eigen::MatrixBase<Derived>& prob_passes) {
  using Scalar = typename Derived::Scalar;
  Scalar sum(0);
  for (Eigen::Index m = 0; m < prob_passes.rows(); ++m) sum += entropy(prob_passes.row(m));
  return sum / static_cast<Scalar>(prob_passes.rows());
}

/// Mutual information H(mean p) - E[H(p)], clamped at zero.
template <typename Derived>
typename Derived::Scalar model_uncertainty(const Eigen::MatrixBase<Derived>& prob_passes) {
  using Scalar = typename Derived::Scalar;
  const Scalar mi = entropy(mean_pass(prob_passes)) - data_uncertainty(prob_passes);
  return mi > Scalar(0) ? mi : Scalar(0);
}

/// Temperature-scaled softmax confidence of the pass-mean logits.
template <typename Derived>
typename Derived::Scalar odin_score(const Eigen::MatrixBase<Derived>& logit_passes,
                                    typename Derived::Scalar temperature) {
  return softmax(mean_pass(logit_passes) / temperature).maxCoeff();
}

/// Class means with a tied, shrunk covariance in feature space.
class MahalanobisModel {
 public:
  MahalanobisModel() = default;

  /// Per-class means and pooled within-class covariance (divided by the
  /// number of samples), plus shrinkage * trace/D on the diagonal. OOD and
  /// ignored rows are skipped; classes with fewer than D+1 rows are excluded
  /// and reported through `warnings`.
  static MahalanobisModel fit(const Eigen::MatrixXd& features, std::span<const ClassId> labels,
                              const ClassTable& table, double shrinkage = 1e-6,
                              std::vector<std::string>* warnings = nullptr);

  /// Model from known moments; `covariance` is used as given.
  static MahalanobisModel from_moments(std::vector<ClassId> class_ids, Eigen::MatrixXd means,
                                       Eigen::MatrixXd covariance);

  /// min_c (f - mu_c)^T Sigma^-1 (f - mu_c).
  double distance(const Eigen::Ref<const Eigen::VectorXd>& feature) const;
  /// Distance and the arg-min class.
  std::pair<double, ClassId> nearest(const Eigen::Ref<const Eigen::VectorXd>& feature) const;

  const std::vector<ClassId>& class_ids() const { return class_ids_; }
  const Eigen::MatrixXd& means() const { return means_; }  // K x D
  Eigen::MatrixXd covariance() const;
  const Eigen::MatrixXd& cholesky_factor() const { return lower_; }
  Eigen::Index dim() const { return means_.cols(); }
  double shrinkage() const { return shrinkage_; }

  /// Scale of the exp(-md/tau) normalization; median training distance after fit.
  double tau() const { return tau_; }
  void set_tau(double tau) { tau_ = tau; }

  void save(const std::filesystem::path& path) const;
  static MahalanobisModel load(const std::filesystem::path& path);

 private:
  void factorize(const Eigen::MatrixXd& covariance);

  std::vector<ClassId> class_ids_;
  Eigen::MatrixXd means_;
  Eigen::MatrixXd lower_;
  double shrinkage_ = 0.0;
  double tau_ = 1.0;
};

inline double mahalanobis_distance(const MahalanobisModel& model,
                                   const Eigen::Ref<const Eigen::VectorXd>& feature) {
  return model.distance(feature);
}

struct NormParams {
  std::size_t num_classes = 2;  // C of the prediction columns
  double tau = 1.0;             // md scale
};

/// Maps a raw score onto [0,1] with high meaning trustworthy. conf and temp
/// are already there; du and mu use 1 - u/ln C; md uses exp(-md/tau).
double normalize_trust(double raw, Method method, const NormParams& params);

}  // namespace levk
