#include <fstream>

#include <json.hpp>

#include "levk/errors.hpp"
#include "levk/lidar_io.hpp"

namespace levk {

Manifest Manifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open manifest " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  const auto base = path.parent_path();
  auto resolve = [&](const nlohmann::json& entry, const char* key) -> std::filesystem::path {
    if (!entry.contains(key) || entry.at(key).is_null()) return {};
    std::filesystem::path p = entry.at(key).get<std::string>();
    return p.is_relative() ? base / p : p;
  };
  Manifest manifest;
  for (const auto& entry : doc.at("frames")) {
    ManifestEntry e;
    e.frame_id = entry.at("id").get<std::string>();
    e.points = resolve(entry, "points");
    e.labels = resolve(entry, "labels");
    e.predictions = resolve(entry, "predictions");
    manifest.frames.push_back(std::move(e));
  }
  return manifest;
}

void Manifest::save(const std::filesystem::path& path) const {
  const auto base = path.parent_path();
  auto rel = [&](const std::filesystem::path& p) -> nlohmann::json {
    if (p.empty()) return nullptr;
    return p.lexically_proximate(base.empty() ? "." : base).generic_string();
  };
  nlohmann::json doc;
  doc["frames"] = nlohmann::json::array();
  for (const auto& f : frames) {
    nlohmann::json entry{{"id", f.frame_id}};
    if (!f.points.empty()) entry["points"] = rel(f.points);
    if (!f.labels.empty()) entry["labels"] = rel(f.labels);
    if (!f.predictions.empty()) entry["predictions"] = rel(f.predictions);
    doc["frames"].push_back(entry);
  }
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot write manifest " + path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace levk
