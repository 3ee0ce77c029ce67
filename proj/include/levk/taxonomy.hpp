#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace levk {

/// Merged class index, 0..C-1. Negative values are reserved for kIgnore.
using ClassId = std::int32_t;
inline constexpr ClassId kIgnore = -1;

/// Label-file encoding of kIgnore for frames written in merged-class space.
inline constexpr std::uint16_t kIgnoreWord = 0xFFFF;

enum class ScaleGroup { large, middle, small, ood };

std::string_view to_string(ScaleGroup group);
ScaleGroup parse_scale_group(std::string_view text);

struct ClassInfo {
  ClassId id = 0;
  std::string name;
  std::string short_name;
  ScaleGroup group = ScaleGroup::large;
  std::optional<double> train_count;  // points, not units
};

/// Class list, raw-label merge map and OOD partition.
///
/// Immutable after construction. Class ids are contiguous and names unique;
/// OOD classes are ground-truth-only and never prediction targets.
class ClassTable {
 public:
  ClassTable(std::vector<ClassInfo> classes, std::map<std::uint32_t, ClassId> merge_map,
             std::vector<ClassId> ood_set, double beta = 0.9, double unit_scale = 1e6);

  static ClassTable from_json(const nlohmann::json& doc);
  static ClassTable load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  std::size_t size() const { return classes_.size(); }
  const std::vector<ClassInfo>& classes() const { return classes_; }
  const ClassInfo& info(ClassId id) const;
  const std::string& name(ClassId id) const { return info(id).name; }
  std::optional<ClassId> find(std::string_view name) const;
  ClassId id_of(std::string_view name) const;

  bool is_ood(ClassId id) const;
  bool is_id(ClassId id) const { return id >= 0 && !is_ood(id); }
  const std::vector<ClassId>& ood_set() const { return ood_; }
  std::vector<ClassId> id_classes() const;

  /// Raw label -> class id (or kIgnore). Throws UnmappedRawLabel.
  ClassId merge(std::uint32_t raw, std::size_t index = 0) const;
  const std::map<std::uint32_t, ClassId>& merge_map() const { return merge_map_; }

  /// Maps the C columns of a prediction file to class ids. C may equal the
  /// table size (one column per class) or the number of ID classes.
  std::vector<ClassId> prediction_columns(std::size_t num_columns) const;

  /// Table whose merge map is the identity on class ids plus kIgnoreWord -> kIgnore;
  /// used to read label files written in merged-class space.
  ClassTable merged_identity() const;

  double beta() const { return beta_; }
  double unit_scale() const { return unit_scale_; }

 private:
  std::vector<ClassInfo> classes_;
  std::map<std::uint32_t, ClassId> merge_map_;
  std::vector<ClassId> ood_;
  std::vector<bool> ood_mask_;
  double beta_;
  double unit_scale_;
};

std::vector<ClassId> merge_labels(std::span<const std::uint32_t> raw, const ClassTable& table);
std::vector<ClassId> merge_labels(std::span<const std::uint16_t> raw, const ClassTable& table);

struct ClassCounts {
  std::vector<double> counts;  // points per class
  double unit_scale = 1e6;
};

/// Effective-number weights (1-beta)/(1-beta^(N_c/unit_scale)).
///
/// With `normalize` the weights are divided by (1-beta), so classes with
/// very large counts approach 1. Throws DegenerateCount on N_c == 0.
std::vector<double> class_weights(const ClassCounts& counts, double beta, bool normalize = true);

/// Train counts recorded in the table, in class order. Classes without a
/// count are reported as 0.
ClassCounts train_counts(const ClassTable& table);

}  // namespace levk
