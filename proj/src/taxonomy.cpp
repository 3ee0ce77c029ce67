#include "levk/taxonomy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "levk/errors.hpp"

namespace levk {

std::string_view to_string(ScaleGroup group) {
  switch (group) {
    case ScaleGroup::large: return "large";
    case ScaleGroup::middle: return "middle";
    case ScaleGroup::small: return "small";
    case ScaleGroup::ood: return "ood";
  }
  return "?";
}

ScaleGroup parse_scale_group(std::string_view text) {
  if (text == "large") return ScaleGroup::large;
  if (text == "middle") return ScaleGroup::middle;
  if (text == "small") return ScaleGroup::small;
  if (text == "ood") return ScaleGroup::ood;
  throw ConfigError("unknown scale group '" + std::string(text) + "'");
}

ClassTable::ClassTable(std::vector<ClassInfo> classes, std::map<std::uint32_t, ClassId> merge_map,
                       std::vector<ClassId> ood_set, double beta, double unit_scale)
    : classes_(std::move(classes)),
      merge_map_(std::move(merge_map)),
      ood_(std::move(ood_set)),
      beta_(beta),
      unit_scale_(unit_scale) {
  if (classes_.size() < 2) throw ConfigError("class table needs at least two classes");
  std::set<std::string> names;
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i].id != static_cast<ClassId>(i))
      throw ConfigError("class ids must be contiguous from 0");
    if (classes_[i].name.empty() || !names.insert(classes_[i].name).second)
      throw ConfigError("class names must be unique and non-empty: '" + classes_[i].name + "'");
  }
  ood_mask_.assign(classes_.size(), false);
  std::sort(ood_.begin(), ood_.end());
  ood_.erase(std::unique(ood_.begin(), ood_.end()), ood_.end());
  for (ClassId id : ood_) {
    if (id < 0 || static_cast<std::size_t>(id) >= classes_.size())
      throw ConfigError("ood class id out of range");
    ood_mask_[id] = true;
  }
  if (ood_.size() + 2 > classes_.size()) throw ConfigError("need at least two ID classes");
  for (const auto& [raw, id] : merge_map_) {
    if (id != kIgnore && (id < 0 || static_cast<std::size_t>(id) >= classes_.size()))
      throw ConfigError("merge map target out of range for raw label " + std::to_string(raw));
  }
  if (!(beta_ > 0.0 && beta_ < 1.0)) throw ConfigError("beta must lie in (0,1)");
  if (!(unit_scale_ > 0.0)) throw ConfigError("unit_scale must be positive");
}

ClassTable ClassTable::from_json(const nlohmann::json& doc) {
  std::vector<ClassInfo> classes;
  for (const auto& entry : doc.at("classes")) {
    ClassInfo info;
    info.id = static_cast<ClassId>(classes.size());
    info.name = entry.at("name").get<std::string>();
    info.short_name = entry.value("short", info.name.substr(0, 2));
    info.group = parse_scale_group(entry.value("scale_group", "large"));
    if (entry.contains("train_count")) info.train_count = entry.at("train_count").get<double>();
    classes.push_back(std::move(info));
  }
  auto lookup = [&](const std::string& name) -> ClassId {
    for (const auto& c : classes)
      if (c.name == name) return c.id;
    throw ConfigError("unknown class name '" + name + "'");
  };

  std::map<std::uint32_t, ClassId> merge_map;
  auto insert = [&](std::uint32_t raw, ClassId id) {
    if (!merge_map.emplace(raw, id).second)
      throw ConfigError("raw label " + std::to_string(raw) + " mapped twice");
  };
  if (doc.contains("merge_map")) {
    for (const auto& [name, raws] : doc.at("merge_map").items())
      for (const auto& raw : raws) insert(raw.get<std::uint32_t>(), lookup(name));
  }
  if (doc.contains("ignore"))
    for (const auto& raw : doc.at("ignore")) insert(raw.get<std::uint32_t>(), kIgnore);

  std::vector<ClassId> ood;
  if (doc.contains("ood"))
    for (const auto& name : doc.at("ood")) ood.push_back(lookup(name.get<std::string>()));

  return ClassTable(std::move(classes), std::move(merge_map), std::move(ood),
                    doc.value("beta", 0.9), doc.value("unit_scale", 1e6));
}

ClassTable ClassTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open class table " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
    return from_json(doc);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

nlohmann::json ClassTable::to_json() const {
  nlohmann::json doc;
  doc["beta"] = beta_;
  doc["unit_scale"] = unit_scale_;
  doc["classes"] = nlohmann::json::array();
  for (const auto& c : classes_) {
    nlohmann::json entry{{"name", c.name}, {"short", c.short_name},
                         {"scale_group", std::string(to_string(c.group))}};
    if (c.train_count) entry["train_count"] = *c.train_count;
    doc["classes"].push_back(entry);
  }
  nlohmann::json merge = nlohmann::json::object();
  nlohmann::json ignore = nlohmann::json::array();
  for (const auto& [raw, id] : merge_map_) {
    if (id == kIgnore)
      ignore.push_back(raw);
    else
      merge[classes_[id].name].push_back(raw);
  }
  doc["merge_map"] = merge;
  doc["ignore"] = ignore;
  doc["ood"] = nlohmann::json::array();
  for (ClassId id : ood_) doc["ood"].push_back(classes_[id].name);
  return doc;
}

const ClassInfo& ClassTable::info(ClassId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= classes_.size())
    throw PreconditionError("class id " + std::to_string(id) + " out of range");
  return classes_[id];
}

std::optional<ClassId> ClassTable::find(std::string_view name) const {
  for (const auto& c : classes_)
    if (c.name == name || c.short_name == name) return c.id;
  return std::nullopt;
}

ClassId ClassTable::id_of(std::string_view name) const {
  if (auto id = find(name)) return *id;
  throw ConfigError("unknown class '" + std::string(name) + "'");
}

bool ClassTable::is_ood(ClassId id) const {
  return id >= 0 && static_cast<std::size_t>(id) < ood_mask_.size() && ood_mask_[id];
}

std::vector<ClassId> ClassTable::id_classes() const {
  std::vector<ClassId> out;
  for (const auto& c : classes_)
    if (!ood_mask_[c.id]) out.push_back(c.id);
  return out;
}

ClassId ClassTable::merge(std::uint32_t raw, std::size_t index) const {
  auto it = merge_map_.find(raw);
  if (it == merge_map_.end()) throw UnmappedRawLabel(raw, index);
  return it->second;
}

std::vector<ClassId> ClassTable::prediction_columns(std::size_t num_columns) const {
  if (num_columns == classes_.size()) {
    std::vector<ClassId> all(classes_.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<ClassId>(i);
    return all;
  }
  auto ids = id_classes();
  if (num_columns == ids.size()) return ids;
  throw PreconditionError("prediction has " + std::to_string(num_columns) +
                          " columns; table has " + std::to_string(classes_.size()) +
                          " classes (" + std::to_string(ids.size()) + " ID)");
}

ClassTable ClassTable::merged_identity() const {
  std::map<std::uint32_t, ClassId> identity;
  for (const auto& c : classes_) identity.emplace(static_cast<std::uint32_t>(c.id), c.id);
  identity.emplace(kIgnoreWord, kIgnore);
  return ClassTable(classes_, std::move(identity), ood_, beta_, unit_scale_);
}

namespace {

template <typename Raw>
std::vector<ClassId> merge_impl(std::span<const Raw> raw, const ClassTable& table) {
  std::vector<ClassId> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = table.merge(raw[i], i);
  return out;
}

}  // namespace

std::vector<ClassId> merge_labels(std::span<const std::uint32_t> raw, const ClassTable& table) {
  return merge_impl(raw, table);
}

std::vector<ClassId> merge_labels(std::span<const std::uint16_t> raw, const ClassTable& table) {
  return merge_impl(raw, table);
}

std::vector<double> class_weights(const ClassCounts& counts, double beta, bool normalize) {
  if (!(beta > 0.0 && beta < 1.0)) throw PreconditionError("beta must lie in (0,1)");
  if (!(counts.unit_scale > 0.0)) throw PreconditionError("unit_scale must be positive");
  std::vector<double> weights(counts.counts.size());
  for (std::size_t c = 0; c < counts.counts.size(); ++c) {
    const double n = counts.counts[c];
    if (n < 0.0) throw PreconditionError("negative class count");
    if (n == 0.0) throw DegenerateCount(c);
    // -expm1(x) = 1 - exp(x) without cancellation for small N_c.
    const double denom = -std::expm1((n / counts.unit_scale) * std::log(beta));
    weights[c] = (normalize ? 1.0 : (1.0 - beta)) / denom;
  }
  return weights;
}

ClassCounts train_counts(const ClassTable& table) {
  ClassCounts out;
  out.unit_scale = table.unit_scale();
  for (const auto& c : table.classes()) out.counts.push_back(c.train_count.value_or(0.0));
  return out;
}

}  // namespace levk
