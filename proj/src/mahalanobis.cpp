#include <algorithm>
#include <cstring>
#include <map>

#include <Eigen/Eigenvalues>

#include "levk/binary.hpp"
#include "levk/errors.hpp"
#include "levk/trust_scores.hpp"

namespace levk {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::conf: return "conf";
    case Method::du: return "du";
    case Method::mu: return "mu";
    case Method::temp: return "temp";
    case Method::md: return "md";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  for (Method m : kAllMethods)
    if (to_string(m) == text) return m;
  throw ConfigError("unknown trust method '" + std::string(text) + "'");
}

double normalize_trust(double raw, Method method, const NormParams& params) {
  switch (method) {
    case Method::conf:
    case Method::temp:
      return std::clamp(raw, 0.0, 1.0);
    case Method::du:
    case Method::mu: {
      const double g = 1.0 - raw / std::log(static_cast<double>(params.num_classes));
      return std::clamp(g, 0.0, 1.0);
    }
    case Method::md:
      return std::exp(-raw / params.tau);
  }
  return 0.0;
}

void MahalanobisModel::factorize(const Eigen::MatrixXd& covariance) {
  const Eigen::MatrixXd sym = 0.5 * (covariance + covariance.transpose());
  if ((sym - covariance).cwiseAbs().maxCoeff() > 1e-6 * std::max(1.0, covariance.cwiseAbs().maxCoeff()))
    throw SingularCovariance("covariance is not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(sym);
  if (llt.info() != Eigen::Success) throw SingularCovariance("covariance is not positive definite");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() <= 0.0) throw SingularCovariance("covariance has a non-positive eigenvalue");
  lower_ = llt.matrixL();
}

MahalanobisModel MahalanobisModel::from_moments(std::vector<ClassId> class_ids, Eigen::MatrixXd means,
                                                Eigen::MatrixXd covariance) {
  if (class_ids.empty() || static_cast<Eigen::Index>(class_ids.size()) != means.rows())
    throw PreconditionError("one mean row per class id required");
  if (covariance.rows() != means.cols() || covariance.cols() != means.cols())
    throw PreconditionError("covariance must be D x D");
  MahalanobisModel model;
  model.class_ids_ = std::move(class_ids);
  model.means_ = std::move(means);
  model.factorize(covariance);
  return model;
}

MahalanobisModel MahalanobisModel::fit(const Eigen::MatrixXd& features, std::span<const ClassId> labels,
                                       const ClassTable& table, double shrinkage,
                                       std::vector<std::string>* warnings) {
  const Eigen::Index d = features.cols();
  if (d < 1) throw PreconditionError("features must have D >= 1");
  if (static_cast<Eigen::Index>(labels.size()) != features.rows())
    throw LengthMismatch(labels.size(), static_cast<std::size_t>(features.rows()));

  std::map<ClassId, std::vector<Eigen::Index>> rows;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (table.is_id(labels[i])) rows[labels[i]].push_back(static_cast<Eigen::Index>(i));

  std::vector<ClassId> ids;
  for (const auto& [c, idx] : rows) {
    if (static_cast<Eigen::Index>(idx.size()) >= d + 1) {
      ids.push_back(c);
    } else if (warnings) {
      warnings->push_back("class '" + table.name(c) + "' has " + std::to_string(idx.size()) +
                          " samples (< D+1); excluded");
    }
  }
  if (ids.empty()) throw InsufficientSamples("no ID class has at least D+1 feature samples");

  Eigen::MatrixXd means(static_cast<Eigen::Index>(ids.size()), d);
  Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(d, d);
  std::size_t total = 0;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto& idx = rows[ids[k]];
    const Eigen::MatrixXd block = features(idx, Eigen::all);
    const Eigen::RowVectorXd mu = block.colwise().mean();
    means.row(static_cast<Eigen::Index>(k)) = mu;
    const Eigen::MatrixXd centred = block.rowwise() - mu;
    scatter.noalias() += centred.transpose() * centred;
    total += idx.size();
  }
  Eigen::MatrixXd covariance = scatter / static_cast<double>(total);
  covariance.diagonal().array() += shrinkage * covariance.trace() / static_cast<double>(d);

  MahalanobisModel model;
  model.class_ids_ = ids;
  model.means_ = std::move(means);
  model.shrinkage_ = shrinkage;
  model.factorize(covariance);

  std::vector<double> train;
  train.reserve(total);
  for (ClassId c : ids)
    for (Eigen::Index i : rows[c]) train.push_back(model.distance(features.row(i).transpose()));
  const std::size_t mid = train.size() / 2;
  std::nth_element(train.begin(), train.begin() + static_cast<std::ptrdiff_t>(mid), train.end());
  model.tau_ = train[mid] > 0.0 ? train[mid] : 1.0;
  return model;
}

std::pair<double, ClassId> MahalanobisModel::nearest(const Eigen::Ref<const Eigen::VectorXd>& feature) const {
  if (means_.rows() == 0) throw PreconditionError("Mahalanobis model is not fitted");
  if (feature.size() != means_.cols()) throw PreconditionError("feature dimension mismatch");
  double best = std::numeric_limits<double>::infinity();
  ClassId arg = class_ids_.front();
  Eigen::VectorXd diff(means_.cols());
  for (Eigen::Index k = 0; k < means_.rows(); ++k) {
    diff = feature - means_.row(k).transpose();
    lower_.triangularView<Eigen::Lower>().solveInPlace(diff);
    const double q = diff.squaredNorm();
    if (q < best) {
      best = q;
      arg = class_ids_[static_cast<std::size_t>(k)];
    }
  }
  return {best, arg};
}

double MahalanobisModel::distance(const Eigen::Ref<const Eigen::VectorXd>& feature) const {
  return nearest(feature).first;
}

Eigen::MatrixXd MahalanobisModel::covariance() const { return lower_ * lower_.transpose(); }

namespace {
constexpr char kModelMagic[4] = {'L', 'E', 'V', 'M'};
constexpr std::uint16_t kModelVersion = 1;
}  // namespace

// "LEVM" | version u16 | pad u16 | K u32 | D u32 | shrinkage f64 | tau f64 |
// K x class id u32 | K x D means f64 | D x D lower Cholesky factor f64 (row-major).
void MahalanobisModel::save(const std::filesystem::path& path) const {
  std::vector<unsigned char> out(kModelMagic, kModelMagic + 4);
  binary::put_uint<std::uint16_t>(out, kModelVersion);
  binary::put_uint<std::uint16_t>(out, 0);
  binary::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(means_.rows()));
  binary::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(means_.cols()));
  binary::put_f64(out, shrinkage_);
  binary::put_f64(out, tau_);
  for (ClassId c : class_ids_) binary::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(c));
  for (Eigen::Index r = 0; r < means_.rows(); ++r)
    for (Eigen::Index c = 0; c < means_.cols(); ++c) binary::put_f64(out, means_(r, c));
  for (Eigen::Index r = 0; r < lower_.rows(); ++r)
    for (Eigen::Index c = 0; c < lower_.cols(); ++c) binary::put_f64(out, lower_(r, c));
  binary::write_file(path.string(), out);
}

MahalanobisModel MahalanobisModel::load(const std::filesystem::path& path) {
  const auto bytes = binary::read_file(path.string());
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kModelMagic, 4) != 0)
    throw BadMagic(path.string() + ": missing LEVM magic");
  binary::Reader in(bytes.data() + 4, bytes.size() - 4);
  if (in.uint<std::uint16_t>() != kModelVersion) throw HeaderInconsistent("unsupported model version");
  in.uint<std::uint16_t>();
  const auto k = in.uint<std::uint32_t>();
  const auto d = in.uint<std::uint32_t>();
  if (k == 0 || d == 0) throw HeaderInconsistent("empty Mahalanobis model");
  const std::size_t expected = 8 + 8 + 4ull * k + 8ull * k * d + 8ull * d * d;
  if (in.remaining() != expected) throw HeaderInconsistent("model payload size disagrees with header");
  MahalanobisModel model;
  model.shrinkage_ = in.f64();
  model.tau_ = in.f64();
  for (std::uint32_t i = 0; i < k; ++i) model.class_ids_.push_back(static_cast<ClassId>(in.uint<std::uint32_t>()));
  model.means_.resize(k, d);
  for (Eigen::Index r = 0; r < model.means_.rows(); ++r)
    for (Eigen::Index c = 0; c < model.means_.cols(); ++c) model.means_(r, c) = in.f64();
  model.lower_.resize(d, d);
  for (Eigen::Index r = 0; r < model.lower_.rows(); ++r)
    for (Eigen::Index c = 0; c < model.lower_.cols(); ++c) model.lower_(r, c) = in.f64();
  return model;
}

}  // namespace levk
