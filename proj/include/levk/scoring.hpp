#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "levk/lidar_io.hpp"
#include "levk/taxonomy.hpp"
#include "levk/trust_scores.hpp"

namespace levk {

struct ScoreOptions {
  std::vector<Method> methods{Method::conf};
  double temperature = 1000.0;
  const MahalanobisModel* model = nullptr;  // required for Method::md
};

/// Raw and normalized scores of one point; slots indexed by Method.
struct ScoreRow {
  ClassId gt = kIgnore;
  ClassId pd = 0;
  std::array<float, 5> raw{};
  std::array<float, 5> g{};
};

struct ScoreTable {
  std::string frame_id;
  std::uint16_t method_mask = 0;
  std::vector<ScoreRow> rows;

  bool has(Method m) const { return method_mask & (1u << static_cast<int>(m)); }
};

/// Argmax of the pass-mean probabilities over ID columns; ties go to the lower column.
ClassId predicted_class(const PredictionSet& set, std::size_t point, const std::vector<ClassId>& columns,
                        const ClassTable& table);

ScoreTable score_predictions(const PredictionSet& set, const ClassTable& table,
                             const ScoreOptions& options, std::string frame_id = {});

/// Score file: a sequence of blocks, one per frame.
///   "LEVS" | version u16 | method mask u16 | id length u16 | id bytes | N u64 |
///   per point: gt i32 | pd i32 | per enabled method (Method order): raw f32, g f32
void append_score_table(const ScoreTable& table, const std::filesystem::path& path);
std::vector<ScoreTable> read_score_file(const std::filesystem::path& path);

}  // namespace levk
