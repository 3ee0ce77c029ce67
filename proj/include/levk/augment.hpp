#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "levk/lidar_io.hpp"
#include "levk/taxonomy.hpp"

namespace levk {

/// An object point cloud lifted out of an auxiliary frame, kept in that
/// frame's sensor coordinates.
struct Instance {
  PointMatrix points;  // x, y, z, intensity
  ClassId class_id = 0;
  std::string source_frame_id;
  std::uint16_t source_instance = 0;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double center_range = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
};

/// Recomputes center and center_range from the points.
void refresh_geometry(Instance& instance);

/// 2D occupancy grid on the plane through the instance center, orthogonal to
/// the beam toward that center. Each occupied cell stores the closest range
/// of the instance points whose rays cross it.
class BillboardMask {
 public:
  struct Cell {
    double depth = 0.0;  // range along the beam, meters
    float intensity = 0.0f;
    bool dilated = false;
  };
  struct Sample {
    double depth;
    float intensity;
  };

  BillboardMask(const Eigen::Vector3d& center, double cell_size);

  const Eigen::Vector3d& center() const { return center_; }
  const Eigen::Vector3d& normal() const { return normal_; }
  double cell_size() const { return cell_size_; }
  std::size_t occupied() const { return cells_.size(); }

  /// In-plane coordinates of the ray from the origin through `point`, if the
  /// ray crosses the plane in front of the sensor.
  std::optional<Eigen::Vector2d> project(const Eigen::Vector3d& point) const;
  Eigen::Vector2i cell_of(const Eigen::Vector2d& uv) const;
  const Cell* find(const Eigen::Vector2i& cell) const;

  /// Marks the cell hit by `point`'s ray, keeping the minimum range.
  void splat(const Eigen::Vector3d& point, float intensity);
  /// One-cell 8-neighbourhood dilation; new cells inherit their nearest-depth neighbour.
  void dilate();

  /// Inverse-distance depth over the k nearest occupied cell centres;
  /// intensity comes from the nearest one. Requires at least one occupied cell.
  Sample interpolate(const Eigen::Vector2d& uv, int k = 3) const;

 private:
  static std::int64_t key(int i, int j) {
    return (static_cast<std::int64_t>(i) << 32) ^ static_cast<std::uint32_t>(j);
  }

  Eigen::Vector3d center_;
  Eigen::Vector3d normal_;
  Eigen::Vector3d u_;
  Eigen::Vector3d v_;
  double cell_size_;
  std::unordered_map<std::int64_t, Cell> cells_;
};

/// Rotation about the sensor z-axis followed by a vertical shift.
struct PlacementPose {
  double theta = 0.0;  // radians, [-pi, pi)
  double dz = 0.0;     // meters
};

enum class PlacementReason { Valid, NoGround, NotRoad, Occupied };
std::string_view to_string(PlacementReason reason);

struct PlacementResult {
  bool valid = false;
  PlacementReason reason = PlacementReason::NoGround;
  std::size_t ground_points = 0;
  std::size_t road_points = 0;
  std::size_t blocking_points = 0;
};

struct AugmentConfig {
  double cell_size = 0.05;
  double margin = 0.2;
  double road_support_fraction = 0.8;
  double ground_band = 0.25;  // height above the lowest footprint point still counted as ground
  std::size_t min_points = 30;
  int max_pose_trials = 16;
  int instances_per_frame = 1;
  int interpolation_k = 3;
  bool random_azimuth = true;  // false keeps every instance at its source azimuth
  std::string road_class = "road";
  std::vector<std::string> passable_classes = {"plants"};
};

/// Class ids the placement rules need, resolved against a table.
struct PlacementClasses {
  ClassId road = 0;
  std::vector<ClassId> passable;

  static PlacementClasses resolve(const ClassTable& table, const AugmentConfig& config);
  bool is_passable(ClassId id) const;
};

/// Instances of `wanted` classes in one frame with at least `min_points` points.
/// `raw_labels` are in the table's raw-label space.
std::vector<Instance> extract_instances(const PointFrame& frame, const LabelFrame& raw_labels,
                                        const ClassTable& table, const std::set<ClassId>& wanted,
                                        std::size_t min_points);

std::vector<Instance> build_instance_bank(const Manifest& frames, const ClassTable& table,
                                          const std::set<ClassId>& wanted, std::size_t min_points);

BillboardMask build_billboard_mask(const Instance& instance, double cell_size = 0.05);

Instance apply_pose(const Instance& instance, const PlacementPose& pose);

/// Median z of road points under the rotated instance's footprint, if any.
/// `labels` are merged (see merge_label_frame).
std::optional<double> road_height(const PointFrame& frame, const LabelFrame& labels,
                                  const Instance& rotated, const PlacementClasses& classes,
                                  const AugmentConfig& config);

/// Pose with azimuth `theta` whose shift sits the instance's lowest point on the road.
std::optional<PlacementPose> ground_aligned_pose(const PointFrame& frame, const LabelFrame& labels,
                                                 const Instance& instance, double theta,
                                                 const PlacementClasses& classes,
                                                 const AugmentConfig& config);

PlacementResult check_placement(const PointFrame& frame, const LabelFrame& labels,
                                const Instance& instance, const PlacementPose& pose,
                                const ClassTable& table, const AugmentConfig& config = {});

struct Provenance {
  std::string source_frame_id;
  std::uint16_t source_instance = 0;
  ClassId class_id = 0;
  PlacementPose pose;
  std::uint16_t assigned_instance = 0;
  std::vector<std::size_t> replaced;
};

struct AugmentedFrame {
  PointFrame frame;
  LabelFrame labels;  // merged class space
  std::vector<Provenance> provenance;
};

/// Replaces every frame point occluded by the posed instance's billboard with
/// the interpolated instance surface on the same beam. Throws NoOcclusion.
AugmentedFrame transplant_instance(const PointFrame& frame, const LabelFrame& labels,
                                   const Instance& instance, const PlacementPose& pose,
                                   const AugmentConfig& config = {});

struct FrameAugmentResult {
  AugmentedFrame augmented;
  std::vector<std::string> warnings;
};

/// Places up to `config.instances_per_frame` instances drawn uniformly from
/// `bank`, trying up to `max_pose_trials` poses each.
FrameAugmentResult augment_frame(const PointFrame& frame, const LabelFrame& labels,
                                 const std::vector<Instance>& bank, const ClassTable& table,
                                 const AugmentConfig& config, std::mt19937_64& rng);

/// Per-frame generator seeded from (seed, frame_id).
std::mt19937_64 frame_rng(std::uint64_t seed, const std::string& frame_id);

struct DatasetAugmentResult {
  Manifest manifest;
  std::vector<std::string> warnings;
};

/// Augments every frame of `source`, writing `.bin`/`.label`/`.prov.json`
/// triples plus `manifest.json` into `out_dir`. `requested` classes must each
/// have at least one instance in `bank`.
DatasetAugmentResult augment_dataset(const Manifest& source, const ClassTable& table,
                                     const std::vector<Instance>& bank,
                                     const std::set<ClassId>& requested,
                                     const AugmentConfig& config, std::uint64_t seed,
                                     const std::filesystem::path& out_dir);

}  // namespace levk
