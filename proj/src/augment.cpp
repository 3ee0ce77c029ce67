#include "levk/augment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

#include <Eigen/Geometry>
#include <json.hpp>

#include "levk/errors.hpp"

namespace levk {

void refresh_geometry(Instance& instance) {
  if (instance.points.rows() == 0) {
    instance.center.setZero();
    instance.center_range = 0.0;
    return;
  }
  instance.center = instance.points.leftCols<3>().cast<double>().colwise().mean().transpose();
  instance.center_range = instance.center.norm();
}

// ---------------------------------------------------------------------------
// Billboard mask

BillboardMask::BillboardMask(const Eigen::Vector3d& center, double cell_size)
    : center_(center), cell_size_(cell_size) {
  if (!(cell_size > 0.0)) throw PreconditionError("cell size must be positive");
  if (center.norm() < 0.1)
    throw DegenerateInstance("instance center lies within 0.1 m of the sensor");
  normal_ = center.normalized();
  Eigen::Vector3d u = Eigen::Vector3d::UnitZ().cross(normal_);
  if (u.norm() < 1e-9) u = Eigen::Vector3d::UnitX();
  u_ = u.normalized();
  v_ = normal_.cross(u_);
}

std::optional<Eigen::Vector2d> BillboardMask::project(const Eigen::Vector3d& point) const {
  const double denom = point.dot(normal_);
  if (denom <= 1e-12) return std::nullopt;
  const Eigen::Vector3d hit = point * (center_.dot(normal_) / denom) - center_;
  return Eigen::Vector2d(hit.dot(u_), hit.dot(v_));
}

Eigen::Vector2i BillboardMask::cell_of(const Eigen::Vector2d& uv) const {
  return {static_cast<int>(std::floor(uv.x() / cell_size_)),
          static_cast<int>(std::floor(uv.y() / cell_size_))};
}

const BillboardMask::Cell* BillboardMask::find(const Eigen::Vector2i& cell) const {
  auto it = cells_.find(key(cell.x(), cell.y()));
  return it == cells_.end() ? nullptr : &it->second;
}

void BillboardMask::splat(const Eigen::Vector3d& point, float intensity) {
  const auto uv = project(point);
  if (!uv) throw DegenerateInstance("instance point lies behind the billboard plane");
  const auto cell = cell_of(*uv);
  const double range = point.norm();
  auto [it, inserted] = cells_.try_emplace(key(cell.x(), cell.y()), Cell{range, intensity, false});
  if (!inserted && range < it->second.depth) it->second = Cell{range, intensity, false};
}

void BillboardMask::dilate() {
  std::vector<std::pair<int, int>> seeds;
  seeds.reserve(cells_.size());
  for (const auto& [k, cell] : cells_) {
    (void)cell;
    seeds.emplace_back(static_cast<int>(k >> 32), static_cast<int>(static_cast<std::int32_t>(k & 0xFFFFFFFF)));
  }
  // Fill from a snapshot so the result does not depend on hash order.
  std::map<std::pair<int, int>, Cell> grown;
  for (const auto& [i, j] : seeds) {
    const Cell& src = cells_.at(key(i, j));
    for (int di = -1; di <= 1; ++di) {
      for (int dj = -1; dj <= 1; ++dj) {
        if (cells_.count(key(i + di, j + dj))) continue;
        auto [it, inserted] = grown.try_emplace({i + di, j + dj}, Cell{src.depth, src.intensity, true});
        if (!inserted && (src.depth < it->second.depth ||
                          (src.depth == it->second.depth && src.intensity < it->second.intensity)))
          it->second = Cell{src.depth, src.intensity, true};
      }
    }
  }
  for (const auto& [ij, cell] : grown) cells_.emplace(key(ij.first, ij.second), cell);
}

BillboardMask::Sample BillboardMask::interpolate(const Eigen::Vector2d& uv, int k) const {
  if (cells_.empty()) throw PreconditionError("interpolating an empty billboard");
  k = std::max(k, 1);
  struct Hit {
    double dist;
    int i, j;
    const Cell* cell;
  };
  std::vector<Hit> hits;
  const Eigen::Vector2i origin = cell_of(uv);
  auto visit = [&](int i, int j) {
    if (const Cell* c = find({i, j})) {
      const Eigen::Vector2d centre((i + 0.5) * cell_size_, (j + 0.5) * cell_size_);
      hits.push_back({(centre - uv).norm(), i, j, c});
    }
  };
  constexpr int kMaxRing = 16;
  int extra_rings = -1;
  for (int r = 0; r <= kMaxRing; ++r) {
    if (r == 0) {
      visit(origin.x(), origin.y());
    } else {
      for (int d = -r; d <= r; ++d) {
        visit(origin.x() + d, origin.y() - r);
        visit(origin.x() + d, origin.y() + r);
      }
      for (int d = -r + 1; d <= r - 1; ++d) {
        visit(origin.x() - r, origin.y() + d);
        visit(origin.x() + r, origin.y() + d);
      }
    }
    // One more ring after reaching k so diagonal neighbours are not missed.
    if (extra_rings < 0 && static_cast<int>(hits.size()) >= k) extra_rings = 1;
    else if (extra_rings > 0 && --extra_rings == 0) break;
  }
  if (hits.empty()) throw PreconditionError("no occupied cell near the query");
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
    return std::tie(a.dist, a.i, a.j) < std::tie(b.dist, b.i, b.j);
  });
  if (static_cast<int>(hits.size()) > k) hits.resize(k);

  const Hit& nearest = hits.front();
  if (nearest.dist < 1e-9 * cell_size_) return {nearest.cell->depth, nearest.cell->intensity};
  double num = 0.0, den = 0.0;
  for (const auto& h : hits) {
    const double w = 1.0 / h.dist;
    num += w * h.cell->depth;
    den += w;
  }
  return {num / den, nearest.cell->intensity};
}

BillboardMask build_billboard_mask(const Instance& instance, double cell_size) {
  if (instance.center_range < 0.1)
    throw DegenerateInstance("instance from " + instance.source_frame_id + " sits at the sensor origin");
  BillboardMask mask(instance.center, cell_size);
  for (Eigen::Index i = 0; i < instance.points.rows(); ++i)
    mask.splat(instance.points.row(i).head<3>().cast<double>().transpose(), instance.points(i, 3));
  mask.dilate();
  return mask;
}

// ---------------------------------------------------------------------------
// Instance bank

std::vector<Instance> extract_instances(const PointFrame& frame, const LabelFrame& raw_labels,
                                        const ClassTable& table, const std::set<ClassId>& wanted,
                                        std::size_t min_points) {
  if (static_cast<std::size_t>(frame.size()) != raw_labels.size())
    throw LengthMismatch(raw_labels.size(), static_cast<std::size_t>(frame.size()));
  const auto classes = merge_labels(std::span<const std::uint16_t>(raw_labels.labels), table);

  // (class, instance id) -> point indices; instance 0 means "no instance".
  std::map<std::pair<ClassId, std::uint16_t>, std::vector<Eigen::Index>> groups;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == kIgnore || !wanted.count(classes[i]) || raw_labels.instance_ids[i] == 0) continue;
    groups[{classes[i], raw_labels.instance_ids[i]}].push_back(static_cast<Eigen::Index>(i));
  }
  std::vector<Instance> out;
  for (const auto& [key, indices] : groups) {
    if (indices.size() < min_points) continue;
    Instance inst;
    inst.class_id = key.first;
    inst.source_instance = key.second;
    inst.source_frame_id = frame.frame_id;
    inst.points.resize(static_cast<Eigen::Index>(indices.size()), 4);
    for (std::size_t r = 0; r < indices.size(); ++r)
      inst.points.row(static_cast<Eigen::Index>(r)) = frame.points.row(indices[r]);
    refresh_geometry(inst);
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<Instance> build_instance_bank(const Manifest& frames, const ClassTable& table,
                                          const std::set<ClassId>& wanted, std::size_t min_points) {
  std::vector<Instance> bank;
  for (const auto& entry : frames.frames) {
    auto frame = read_point_frame(entry.points);
    frame.frame_id = entry.frame_id;
    const auto labels = read_label_frame(entry.labels, static_cast<std::size_t>(frame.size()));
    auto found = extract_instances(frame, labels, table, wanted, min_points);
    std::move(found.begin(), found.end(), std::back_inserter(bank));
  }
  return bank;
}

// ---------------------------------------------------------------------------
// Placement

std::string_view to_string(PlacementReason reason) {
  switch (reason) {
    case PlacementReason::Valid: return "Valid";
    case PlacementReason::NoGround: return "NoGround";
    case PlacementReason::NotRoad: return "NotRoad";
    case PlacementReason::Occupied: return "Occupied";
  }
  return "?";
}

PlacementClasses PlacementClasses::resolve(const ClassTable& table, const AugmentConfig& config) {
  PlacementClasses out;
  out.road = table.id_of(config.road_class);
  for (const auto& name : config.passable_classes)
    if (auto id = table.find(name)) out.passable.push_back(*id);
  return out;
}

bool PlacementClasses::is_passable(ClassId id) const {
  return std::find(passable.begin(), passable.end(), id) != passable.end();
}

Instance apply_pose(const Instance& instance, const PlacementPose& pose) {
  Instance out = instance;
  const float c = static_cast<float>(std::cos(pose.theta));
  const float s = static_cast<float>(std::sin(pose.theta));
  Eigen::Matrix2f rot;
  rot << c, -s, s, c;
  out.points.leftCols<2>() = (out.points.leftCols<2>() * rot.transpose()).eval();
  out.points.col(2).array() += static_cast<float>(pose.dz);
  refresh_geometry(out);
  return out;
}

namespace {

struct Footprint {
  Eigen::Vector2d center;
  double radius;  // includes margin
  double z_min;
  double z_max;

  bool contains(const PointMatrix& pts, Eigen::Index i) const {
    const double dx = pts(i, 0) - center.x();
    const double dy = pts(i, 1) - center.y();
    return dx * dx + dy * dy <= radius * radius;
  }
};

Footprint footprint_of(const Instance& posed, double margin) {
  Footprint fp;
  fp.center = posed.center.head<2>();
  const auto xy = posed.points.leftCols<2>().cast<double>();
  fp.radius = (xy.rowwise() - fp.center.transpose()).rowwise().norm().maxCoeff() + margin;
  fp.z_min = posed.points.col(2).minCoeff();
  fp.z_max = posed.points.col(2).maxCoeff();
  return fp;
}

struct GroundSurvey {
  std::size_t footprint_points = 0;
  std::size_t ground_points = 0;
  std::vector<double> road_z;
  double ground_floor = 0.0;
};

GroundSurvey survey_ground(const PointFrame& frame, const std::vector<ClassId>& classes,
                           const Footprint& fp, const PlacementClasses& pc, double band) {
  GroundSurvey s;
  std::vector<Eigen::Index> inside;
  double z_floor = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < frame.size(); ++i) {
    if (!fp.contains(frame.points, i)) continue;
    inside.push_back(i);
    z_floor = std::min(z_floor, static_cast<double>(frame.points(i, 2)));
  }
  s.footprint_points = inside.size();
  s.ground_floor = z_floor;
  for (Eigen::Index i : inside) {
    if (frame.points(i, 2) > z_floor + band) continue;
    ++s.ground_points;
    if (classes[static_cast<std::size_t>(i)] == pc.road) s.road_z.push_back(frame.points(i, 2));
  }
  return s;
}

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    m = 0.5 * (m + lo);
  }
  return m;
}

std::vector<ClassId> merged_classes(const LabelFrame& labels, std::size_t n) {
  if (labels.size() != n) throw LengthMismatch(labels.size(), n);
  std::vector<ClassId> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = labels.labels[i] == kIgnoreWord ? kIgnore : static_cast<ClassId>(labels.labels[i]);
  return out;
}

}  // namespace

std::optional<double> road_height(const PointFrame& frame, const LabelFrame& labels,
                                  const Instance& rotated, const PlacementClasses& classes,
                                  const AugmentConfig& config) {
  const auto merged = merged_classes(labels, static_cast<std::size_t>(frame.size()));
  const auto fp = footprint_of(rotated, config.margin);
  auto survey = survey_ground(frame, merged, fp, classes, config.ground_band);
  if (survey.road_z.empty()) return std::nullopt;
  return median(std::move(survey.road_z));
}

std::optional<PlacementPose> ground_aligned_pose(const PointFrame& frame, const LabelFrame& labels,
                                                 const Instance& instance, double theta,
                                                 const PlacementClasses& classes,
                                                 const AugmentConfig& config) {
  const Instance rotated = apply_pose(instance, {theta, 0.0});
  const auto ground = road_height(frame, labels, rotated, classes, config);
  if (!ground) return std::nullopt;
  return PlacementPose{theta, *ground - rotated.points.col(2).minCoeff()};
}

PlacementResult check_placement(const PointFrame& frame, const LabelFrame& labels,
                                const Instance& instance, const PlacementPose& pose,
                                const ClassTable& table, const AugmentConfig& config) {
  const auto pc = PlacementClasses::resolve(table, config);
  const auto merged = merged_classes(labels, static_cast<std::size_t>(frame.size()));
  const Instance posed = apply_pose(instance, pose);
  const auto fp = footprint_of(posed, config.margin);

  PlacementResult result;
  const auto survey = survey_ground(frame, merged, fp, pc, config.ground_band);
  result.ground_points = survey.ground_points;
  result.road_points = survey.road_z.size();
  if (survey.ground_points == 0) {
    result.reason = PlacementReason::NoGround;
    return result;
  }
  if (static_cast<double>(result.road_points) <
      config.road_support_fraction * static_cast<double>(result.ground_points)) {
    result.reason = PlacementReason::NotRoad;
    return result;
  }

  const double lo = fp.z_min - config.margin;
  const double hi = fp.z_max + config.margin;
  const double ground_top = survey.ground_floor + config.ground_band;
  for (Eigen::Index i = 0; i < frame.size(); ++i) {
    const double z = frame.points(i, 2);
    if (z < lo || z > hi || !fp.contains(frame.points, i)) continue;
    const ClassId id = merged[static_cast<std::size_t>(i)];
    if (id == pc.road) continue;
    if (pc.is_passable(id) && z <= ground_top) continue;
    ++result.blocking_points;
  }
  if (result.blocking_points > 0) {
    result.reason = PlacementReason::Occupied;
    return result;
  }
  result.valid = true;
  result.reason = PlacementReason::Valid;
  return result;
}

// ---------------------------------------------------------------------------
// Transplanting

AugmentedFrame transplant_instance(const PointFrame& frame, const LabelFrame& labels,
                                   const Instance& instance, const PlacementPose& pose,
                                   const AugmentConfig& config) {
  if (static_cast<std::size_t>(frame.size()) != labels.size())
    throw LengthMismatch(labels.size(), static_cast<std::size_t>(frame.size()));
  const Instance posed = apply_pose(instance, pose);
  const BillboardMask mask = build_billboard_mask(posed, config.cell_size);

  AugmentedFrame out{frame, labels, {}};
  std::uint16_t next_instance = 1;
  for (auto id : labels.instance_ids) next_instance = std::max<std::uint16_t>(next_instance, id + 1);
  if (next_instance == 0) throw PreconditionError("instance id space exhausted");

  Provenance prov;
  prov.source_frame_id = instance.source_frame_id;
  prov.source_instance = instance.source_instance;
  prov.class_id = instance.class_id;
  prov.pose = pose;
  prov.assigned_instance = next_instance;

  for (Eigen::Index i = 0; i < frame.size(); ++i) {
    const Eigen::Vector3d p = frame.points.row(i).head<3>().cast<double>().transpose();
    const double range = p.norm();
    if (range < 1e-6) continue;
    const auto uv = mask.project(p);
    if (!uv) continue;
    const auto* cell = mask.find(mask.cell_of(*uv));
    if (!cell || range <= cell->depth) continue;
    const auto sample = mask.interpolate(*uv, config.interpolation_k);
    // keep a float-visible gap so the written point is strictly closer
    if (range <= sample.depth * (1.0 + 1e-6)) continue;
    const Eigen::Vector3d moved = p * (sample.depth / range);
    out.frame.points.row(i).head<3>() = moved.cast<float>().transpose();
    out.frame.points(i, 3) = sample.intensity;
    out.labels.labels[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(instance.class_id);
    out.labels.instance_ids[static_cast<std::size_t>(i)] = next_instance;
    prov.replaced.push_back(static_cast<std::size_t>(i));
  }
  if (prov.replaced.empty())
    throw NoOcclusion("instance from " + instance.source_frame_id + " occludes no frame point");
  out.provenance.push_back(std::move(prov));
  return out;
}

// ---------------------------------------------------------------------------
// Dataset driver

std::mt19937_64 frame_rng(std::uint64_t seed, const std::string& frame_id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : frame_id) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return std::mt19937_64(h ^ (seed * 0x9E3779B97F4A7C15ULL));
}

namespace {

// Hand-rolled draws: std distributions are not specified bit-for-bit across libraries.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

}  // namespace

FrameAugmentResult augment_frame(const PointFrame& frame, const LabelFrame& labels,
                                 const std::vector<Instance>& bank, const ClassTable& table,
                                 const AugmentConfig& config, std::mt19937_64& rng) {
  if (bank.empty()) throw PreconditionError("instance bank is empty");
  const auto pc = PlacementClasses::resolve(table, config);
  FrameAugmentResult result{{frame, labels, {}}, {}};
  for (int k = 0; k < config.instances_per_frame; ++k) {
    const Instance& inst = bank[uniform_index(rng, bank.size())];
    bool placed = false;
    std::map<PlacementReason, int> rejections;
    int no_occlusion = 0;
    const int trials = config.random_azimuth ? config.max_pose_trials : 1;
    for (int t = 0; t < trials && !placed; ++t) {
      const double theta = config.random_azimuth ? -std::numbers::pi + 2.0 * std::numbers::pi * uniform01(rng) : 0.0;
      const auto pose = ground_aligned_pose(result.augmented.frame, result.augmented.labels, inst, theta, pc, config);
      if (!pose) {
        ++rejections[PlacementReason::NoGround];
        continue;
      }
      const auto verdict = check_placement(result.augmented.frame, result.augmented.labels, inst, *pose, table, config);
      if (!verdict.valid) {
        ++rejections[verdict.reason];
        continue;
      }
      try {
        auto next = transplant_instance(result.augmented.frame, result.augmented.labels, inst, *pose, config);
        result.augmented.frame = std::move(next.frame);
        result.augmented.labels = std::move(next.labels);
        result.augmented.provenance.push_back(std::move(next.provenance.front()));
        placed = true;
      } catch (const NoOcclusion&) {
        ++no_occlusion;
      }
    }
    if (!placed) {
      std::string why;
      for (const auto& [reason, count] : rejections)
        why += " " + std::string(to_string(reason)) + "=" + std::to_string(count);
      if (no_occlusion) why += " NoOcclusion=" + std::to_string(no_occlusion);
      result.warnings.push_back("ExhaustedTrials: frame " + frame.frame_id + " instance " +
                                inst.source_frame_id + "/" + std::to_string(inst.source_instance) +
                                ":" + why);
    }
  }
  return result;
}

namespace {

nlohmann::json index_ranges(const std::vector<std::size_t>& indices) {
  nlohmann::json ranges = nlohmann::json::array();
  for (std::size_t a = 0; a < indices.size();) {
    std::size_t b = a;
    while (b + 1 < indices.size() && indices[b + 1] == indices[b] + 1) ++b;
    ranges.push_back({indices[a], indices[b]});
    a = b + 1;
  }
  return ranges;
}

}  // namespace

DatasetAugmentResult augment_dataset(const Manifest& source, const ClassTable& table,
                                     const std::vector<Instance>& bank,
                                     const std::set<ClassId>& requested,
                                     const AugmentConfig& config, std::uint64_t seed,
                                     const std::filesystem::path& out_dir) {
  if (requested.empty()) throw PreconditionError("no classes requested");
  std::vector<Instance> pool;
  for (ClassId c : requested) {
    std::size_t found = 0;
    for (const auto& inst : bank)
      if (inst.class_id == c) {
        pool.push_back(inst);
        ++found;
      }
    if (found == 0) throw PreconditionError("instance bank has no '" + table.name(c) + "' instance");
  }

  DatasetAugmentResult result;
  std::filesystem::create_directories(out_dir);
  for (const auto& entry : source.frames) {
    auto frame = read_point_frame(entry.points);
    frame.frame_id = entry.frame_id;
    const auto raw = read_label_frame(entry.labels, static_cast<std::size_t>(frame.size()));
    const auto merged = merge_label_frame(raw, table);

    auto rng = frame_rng(seed, entry.frame_id);
    auto outcome = augment_frame(frame, merged, pool, table, config, rng);
    const auto written = write_augmented_frame(outcome.augmented.frame, outcome.augmented.labels, out_dir);

    nlohmann::json sidecar;
    sidecar["frame_id"] = entry.frame_id;
    sidecar["seed"] = seed;
    sidecar["instances"] = nlohmann::json::array();
    for (const auto& p : outcome.augmented.provenance) {
      sidecar["instances"].push_back({{"source_frame", p.source_frame_id},
                                      {"source_instance", p.source_instance},
                                      {"class", table.name(p.class_id)},
                                      {"theta", p.pose.theta},
                                      {"dz", p.pose.dz},
                                      {"assigned_instance", p.assigned_instance},
                                      {"replaced_count", p.replaced.size()},
                                      {"replaced", index_ranges(p.replaced)}});
    }
    sidecar["warnings"] = outcome.warnings;
    const auto prov_path = out_dir / (entry.frame_id + ".prov.json");
    std::ofstream(prov_path) << sidecar.dump(2) << '\n';

    result.manifest.frames.push_back({entry.frame_id, written.points, written.labels, {}});
    result.warnings.insert(result.warnings.end(), outcome.warnings.begin(), outcome.warnings.end());
  }
  result.manifest.save(out_dir / "manifest.json");
  return result;
}

}  // namespace levk
