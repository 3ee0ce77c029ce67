#include "levk/scoring.hpp"

#include <bit>
#include <cstring>

#include "levk/binary.hpp"
#include "levk/errors.hpp"

namespace levk {

ClassId predicted_class(const PredictionSet& set, std::size_t point, const std::vector<ClassId>& columns,
                        const ClassTable& table) {
  const auto passes = set.prob_passes(point);
  ClassId best = kIgnore;
  double best_p = -1.0;
  for (int k = 0; k < set.c; ++k) {
    const ClassId id = columns[static_cast<std::size_t>(k)];
    if (!table.is_id(id)) continue;
    const double p = passes.col(k).cast<double>().mean();
    if (p > best_p) {
      best_p = p;
      best = id;
    }
  }
  return best;
}

ScoreTable score_predictions(const PredictionSet& set, const ClassTable& table,
                             const ScoreOptions& options, std::string frame_id) {
  const auto columns = table.prediction_columns(static_cast<std::size_t>(set.c));
  ScoreTable out;
  out.frame_id = std::move(frame_id);
  for (Method m : options.methods) out.method_mask |= static_cast<std::uint16_t>(1u << static_cast<int>(m));
  if (out.has(Method::temp) && !set.has_logits()) throw LogitsAbsent();
  if (out.has(Method::md)) {
    if (!set.has_features()) throw FeaturesAbsent();
    if (!options.model) throw PreconditionError("md scoring needs a fitted Mahalanobis model");
    if (options.model->dim() != set.d) throw PreconditionError("model dimension differs from feature dimension");
  }
  if (!(options.temperature > 0.0)) throw PreconditionError("temperature must be positive");

  const NormParams norm{static_cast<std::size_t>(set.c), options.model ? options.model->tau() : 1.0};
  out.rows.resize(set.n);
  for (std::size_t i = 0; i < set.n; ++i) {
    ScoreRow& row = out.rows[i];
    row.gt = set.gt_class(i);
    row.pd = predicted_class(set, i, columns, table);
    const Eigen::MatrixXd probs = set.prob_passes(i).cast<double>();
    auto put = [&](Method m, double raw) {
      row.raw[static_cast<int>(m)] = static_cast<float>(raw);
      row.g[static_cast<int>(m)] = static_cast<float>(normalize_trust(raw, m, norm));
    };
    if (out.has(Method::conf)) put(Method::conf, softmax_confidence(probs));
    if (out.has(Method::du)) put(Method::du, data_uncertainty(probs));
    if (out.has(Method::mu)) put(Method::mu, model_uncertainty(probs));
    if (out.has(Method::temp))
      put(Method::temp, odin_score(Eigen::MatrixXd(set.logit_passes(i).cast<double>()), options.temperature));
    if (out.has(Method::md)) put(Method::md, options.model->distance(set.feature(i).cast<double>()));
  }
  return out;
}

namespace {
constexpr char kScoreMagic[4] = {'L', 'E', 'V', 'S'};
constexpr std::uint16_t kScoreVersion = 1;
}  // namespace

void append_score_table(const ScoreTable& table, const std::filesystem::path& path) {
  if (table.frame_id.size() > 0xFFFF) throw PreconditionError("frame id too long");
  std::vector<unsigned char> out(kScoreMagic, kScoreMagic + 4);
  binary::put_uint<std::uint16_t>(out, kScoreVersion);
  binary::put_uint<std::uint16_t>(out, table.method_mask);
  binary::put_uint<std::uint16_t>(out, static_cast<std::uint16_t>(table.frame_id.size()));
  out.insert(out.end(), table.frame_id.begin(), table.frame_id.end());
  binary::put_uint<std::uint64_t>(out, table.rows.size());
  for (const auto& row : table.rows) {
    binary::put_uint(out, static_cast<std::uint32_t>(row.gt));
    binary::put_uint(out, static_cast<std::uint32_t>(row.pd));
    for (Method m : kAllMethods) {
      if (!table.has(m)) continue;
      binary::put_f32(out, row.raw[static_cast<int>(m)]);
      binary::put_f32(out, row.g[static_cast<int>(m)]);
    }
  }
  binary::append_file(path.string(), out);
}

std::vector<ScoreTable> read_score_file(const std::filesystem::path& path) {
  const auto bytes = binary::read_file(path.string());
  binary::Reader in(bytes.data(), bytes.size());
  std::vector<ScoreTable> tables;
  while (in.remaining() > 0) {
    if (in.bytes(4) != std::string(kScoreMagic, 4)) throw BadMagic(path.string() + ": missing LEVS magic");
    if (in.uint<std::uint16_t>() != kScoreVersion) throw HeaderInconsistent("unsupported score version");
    ScoreTable table;
    table.method_mask = in.uint<std::uint16_t>();
    if (table.method_mask == 0 || (table.method_mask >> kAllMethods.size()))
      throw HeaderInconsistent("bad method mask");
    table.frame_id = in.bytes(in.uint<std::uint16_t>());
    const auto n = in.uint<std::uint64_t>();
    const std::size_t per_row = 8 + 8 * static_cast<std::size_t>(std::popcount(table.method_mask));
    if (n > in.remaining() / per_row) throw HeaderInconsistent("score block larger than file");
    table.rows.resize(static_cast<std::size_t>(n));
    for (auto& row : table.rows) {
      row.gt = static_cast<ClassId>(in.uint<std::uint32_t>());
      row.pd = static_cast<ClassId>(in.uint<std::uint32_t>());
      for (Method m : kAllMethods) {
        if (!table.has(m)) continue;
        row.raw[static_cast<int>(m)] = in.f32();
        row.g[static_cast<int>(m)] = in.f32();
      }
    }
    tables.push_back(std::move(table));
  }
  return tables;
}

}  // namespace levk
