#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "levk/taxonomy.hpp"

namespace levk {

/// N x (x, y, z, intensity), row-major so the memory layout matches a `.bin` sweep.
using PointMatrix = Eigen::Matrix<float, Eigen::Dynamic, 4, Eigen::RowMajor>;

struct PointFrame {
  PointMatrix points;
  std::string frame_id;

  Eigen::Index size() const { return points.rows(); }
};

/// Per-point label words split into semantic label (low 16 bits) and instance id (high 16).
struct LabelFrame {
  std::vector<std::uint16_t> labels;
  std::vector<std::uint16_t> instance_ids;

  std::size_t size() const { return labels.size(); }
};

constexpr std::pair<std::uint16_t, std::uint16_t> split_label_word(std::uint32_t word) {
  return {static_cast<std::uint16_t>(word & 0xFFFFu), static_cast<std::uint16_t>(word >> 16)};
}

constexpr std::uint32_t join_label_word(std::uint16_t label, std::uint16_t instance) {
  return static_cast<std::uint32_t>(label) | (static_cast<std::uint32_t>(instance) << 16);
}

PointFrame read_point_frame(const std::filesystem::path& path);
void write_point_frame(const PointFrame& frame, const std::filesystem::path& path);

LabelFrame read_label_frame(const std::filesystem::path& path, std::size_t n_expected);
void write_label_frame(const LabelFrame& labels, const std::filesystem::path& path);

/// Merged class per point; kIgnoreWord decodes to kIgnore.
std::vector<ClassId> class_labels(const LabelFrame& labels, const ClassTable& table);

/// Re-encodes raw labels in merged-class space (kIgnore -> kIgnoreWord), instance ids kept.
LabelFrame merge_label_frame(const LabelFrame& raw, const ClassTable& table);

struct WrittenPair {
  std::filesystem::path points;
  std::filesystem::path labels;
};

/// Writes `<out_dir>/<frame_id>.bin` and `<out_dir>/<frame_id>.label`.
WrittenPair write_augmented_frame(const PointFrame& frame, const LabelFrame& labels,
                                  const std::filesystem::path& out_dir);

inline constexpr std::uint32_t kIgnoreGt = 0xFFFFFFFFu;

/// Per point: ground truth, M probability passes over C classes, optional
/// logits (M x C) and an optional D-dimensional feature.
///
/// Arrays are point-major; pass-major within a point; class-minor.
struct PredictionSet {
  using PassMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using PassMap = Eigen::Map<const PassMatrix>;
  using FeatureMap = Eigen::Map<const Eigen::VectorXf>;

  std::size_t n = 0;
  int m = 1;
  int c = 2;
  int d = 0;
  std::vector<std::uint32_t> gt;  // merged class id, kIgnoreGt for ignored points
  std::vector<float> probs;
  std::vector<float> logits;
  std::vector<float> features;

  bool has_logits() const { return !logits.empty(); }
  bool has_features() const { return d > 0; }

  PassMap prob_passes(std::size_t i) const { return {probs.data() + i * m * c, m, c}; }
  PassMap logit_passes(std::size_t i) const { return {logits.data() + i * m * c, m, c}; }
  FeatureMap feature(std::size_t i) const { return {features.data() + i * d, d}; }

  ClassId gt_class(std::size_t i) const {
    return gt[i] == kIgnoreGt ? kIgnore : static_cast<ClassId>(gt[i]);
  }

  /// Checks sizes against (n, m, c, d); throws HeaderInconsistent.
  void validate_shape() const;
};

struct PredictionReadStats {
  std::size_t renormalized_rows = 0;
};

PredictionSet read_prediction_set(const std::filesystem::path& path,
                                  PredictionReadStats* stats = nullptr);
void write_prediction_set(const PredictionSet& set, const std::filesystem::path& path);

/// Validates and renormalizes probability rows in place. Rows within 1e-4 of
/// unit sum are left untouched, rows within 1e-2 are rescaled, anything else
/// throws ProbabilityNotNormalized.
std::size_t normalize_probabilities(PredictionSet& set);

/// Text fallback for small fixtures. Header row
/// `point,pass,gt,p0..p{C-1}[,l0..l{C-1}][,f0..f{D-1}]`; one row per (point, pass),
/// passes of a point contiguous, features read from pass 0. `gt` may be `ignore`.
PredictionSet import_prediction_csv(const std::filesystem::path& path);

struct ManifestEntry {
  std::string frame_id;
  std::filesystem::path points;
  std::filesystem::path labels;
  std::filesystem::path predictions;
};

/// Frame listing. Relative paths in the file resolve against the manifest's directory.
struct Manifest {
  std::vector<ManifestEntry> frames;

  static Manifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

}  // namespace levk
