#include "levk/lidar_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "levk/binary.hpp"
#include "levk/errors.hpp"

namespace levk {

namespace binary {

const unsigned char* Reader::take(std::size_t n) {
  if (!has(n))
    throw TruncatedFile("unexpected end of data at byte " + std::to_string(pos_));
  const unsigned char* p = data_ + pos_;
  pos_ += n;
  return p;
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoFailure("cannot open " + path);
  const auto size = static_cast<std::size_t>(in.tellg());
  std::vector<unsigned char> bytes(size);
  in.seekg(0);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size)))
    throw IoFailure("cannot read " + path);
  return bytes;
}

namespace {
void dump(const std::string& path, const std::vector<unsigned char>& bytes, std::ios::openmode mode) {
  std::ofstream out(path, std::ios::binary | mode);
  if (!out) throw IoFailure("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoFailure("cannot write " + path);
}
}  // namespace

void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
  dump(path, bytes, std::ios::trunc);
}

void append_file(const std::string& path, const std::vector<unsigned char>& bytes) {
  dump(path, bytes, std::ios::app);
}

}  // namespace binary

PointFrame read_point_frame(const std::filesystem::path& path) {
  const auto bytes = binary::read_file(path.string());
  if (bytes.size() % 16 != 0)
    throw TruncatedFile(path.string() + ": size " + std::to_string(bytes.size()) +
                        " is not a multiple of 16");
  const std::size_t n = bytes.size() / 16;
  PointFrame frame;
  frame.frame_id = path.stem().string();
  frame.points.resize(static_cast<Eigen::Index>(n), 4);
  const unsigned char* p = bytes.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 4; ++k, p += 4) {
      const float v = binary::get_f32(p);
      if (!std::isfinite(v)) throw NonFiniteValue(i);
      frame.points(static_cast<Eigen::Index>(i), k) = v;
    }
  }
  return frame;
}

void write_point_frame(const PointFrame& frame, const std::filesystem::path& path) {
  std::vector<unsigned char> bytes;
  bytes.reserve(static_cast<std::size_t>(frame.size()) * 16);
  for (Eigen::Index i = 0; i < frame.size(); ++i)
    for (int k = 0; k < 4; ++k) binary::put_f32(bytes, frame.points(i, k));
  binary::write_file(path.string(), bytes);
}

LabelFrame read_label_frame(const std::filesystem::path& path, std::size_t n_expected) {
  const auto bytes = binary::read_file(path.string());
  if (bytes.size() % 4 != 0 || bytes.size() / 4 != n_expected)
    throw LengthMismatch(bytes.size() / 4, n_expected);
  LabelFrame out;
  out.labels.resize(n_expected);
  out.instance_ids.resize(n_expected);
  for (std::size_t i = 0; i < n_expected; ++i) {
    const auto [label, instance] = split_label_word(binary::get_uint<std::uint32_t>(bytes.data() + 4 * i));
    out.labels[i] = label;
    out.instance_ids[i] = instance;
  }
  return out;
}

void write_label_frame(const LabelFrame& labels, const std::filesystem::path& path) {
  if (labels.labels.size() != labels.instance_ids.size())
    throw PreconditionError("label and instance arrays differ in length");
  std::vector<unsigned char> bytes;
  bytes.reserve(labels.size() * 4);
  for (std::size_t i = 0; i < labels.size(); ++i)
    binary::put_uint(bytes, join_label_word(labels.labels[i], labels.instance_ids[i]));
  binary::write_file(path.string(), bytes);
}

std::vector<ClassId> class_labels(const LabelFrame& labels, const ClassTable& table) {
  std::vector<ClassId> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto word = labels.labels[i];
    if (word == kIgnoreWord) {
      out[i] = kIgnore;
    } else if (word < table.size()) {
      out[i] = static_cast<ClassId>(word);
    } else {
      throw UnmappedRawLabel(word, i);
    }
  }
  return out;
}

LabelFrame merge_label_frame(const LabelFrame& raw, const ClassTable& table) {
  LabelFrame out;
  out.instance_ids = raw.instance_ids;
  out.labels.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const ClassId id = table.merge(raw.labels[i], i);
    out.labels[i] = id == kIgnore ? kIgnoreWord : static_cast<std::uint16_t>(id);
  }
  return out;
}

WrittenPair write_augmented_frame(const PointFrame& frame, const LabelFrame& labels,
                                  const std::filesystem::path& out_dir) {
  if (static_cast<std::size_t>(frame.size()) != labels.size() ||
      labels.labels.size() != labels.instance_ids.size())
    throw PreconditionError("frame has " + std::to_string(frame.size()) + " points but " +
                            std::to_string(labels.size()) + " labels");
  if (frame.frame_id.empty()) throw PreconditionError("frame id must not be empty");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoFailure("cannot create " + out_dir.string() + ": " + ec.message());
  WrittenPair pair{out_dir / (frame.frame_id + ".bin"), out_dir / (frame.frame_id + ".label")};
  write_point_frame(frame, pair.points);
  write_label_frame(labels, pair.labels);
  return pair;
}

// ---------------------------------------------------------------------------
// Prediction container

namespace {

constexpr char kMagic[4] = {'L', 'E', 'V', 'K'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint16_t kFlagLogits = 1u << 0;
constexpr std::uint16_t kFlagFeatures = 1u << 1;
constexpr std::size_t kHeaderBytes = 24;

std::size_t point_stride(int m, int c, int d, bool logits, bool features) {
  std::size_t floats = static_cast<std::size_t>(m) * c;
  if (logits) floats += static_cast<std::size_t>(m) * c;
  if (features) floats += static_cast<std::size_t>(d);
  return 4 + 4 * floats;
}

}  // namespace

void PredictionSet::validate_shape() const {
  if (m < 1) throw HeaderInconsistent("M must be >= 1");
  if (c < 2) throw HeaderInconsistent("C must be >= 2");
  if (d < 0) throw HeaderInconsistent("D must be >= 0");
  const std::size_t mc = static_cast<std::size_t>(m) * c;
  if (gt.size() != n || probs.size() != n * mc)
    throw HeaderInconsistent("probability payload does not match N x M x C");
  if (!logits.empty() && logits.size() != n * mc)
    throw HeaderInconsistent("logit payload does not match N x M x C");
  if (features.size() != n * static_cast<std::size_t>(d))
    throw HeaderInconsistent("feature payload does not match N x D");
}

std::size_t normalize_probabilities(PredictionSet& set) {
  std::size_t rescaled = 0;
  const std::size_t rows = set.n * static_cast<std::size_t>(set.m);
  for (std::size_t row = 0; row < rows; ++row) {
    float* p = set.probs.data() + row * set.c;
    double sum = 0.0;
    for (int k = 0; k < set.c; ++k) {
      if (!(p[k] >= 0.0f) || !std::isfinite(p[k])) throw ProbabilityNotNormalized(row / set.m);
      sum += p[k];
    }
    const double err = std::abs(sum - 1.0);
    if (err <= 1e-4) continue;
    if (err > 1e-2) throw ProbabilityNotNormalized(row / set.m);
    for (int k = 0; k < set.c; ++k) p[k] = static_cast<float>(p[k] / sum);
    ++rescaled;
  }
  return rescaled;
}

PredictionSet read_prediction_set(const std::filesystem::path& path, PredictionReadStats* stats) {
  const auto bytes = binary::read_file(path.string());
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw BadMagic(path.string() + ": missing LEVK magic");
  if (bytes.size() < kHeaderBytes) throw HeaderInconsistent(path.string() + ": short header");
  binary::Reader in(bytes.data() + 4, bytes.size() - 4);
  const auto version = in.uint<std::uint16_t>();
  const auto flags = in.uint<std::uint16_t>();
  const auto n = in.uint<std::uint64_t>();
  const auto m = in.uint<std::uint16_t>();
  const auto c = in.uint<std::uint16_t>();
  const auto d = in.uint<std::uint16_t>();
  in.uint<std::uint16_t>();  // pad

  if (version != kVersion) throw HeaderInconsistent("unsupported version " + std::to_string(version));
  if (flags & ~(kFlagLogits | kFlagFeatures)) throw HeaderInconsistent("unknown flag bits");
  const bool has_logits = flags & kFlagLogits;
  const bool has_features = flags & kFlagFeatures;
  if (m < 1 || c < 2) throw HeaderInconsistent("M must be >= 1 and C >= 2");
  if (has_features != (d > 0)) throw HeaderInconsistent("feature flag disagrees with D");
  const std::size_t stride = point_stride(m, c, d, has_logits, has_features);
  if (n > in.remaining() / stride || n * stride != in.remaining())
    throw HeaderInconsistent(path.string() + ": payload size disagrees with header");

  PredictionSet set;
  set.n = static_cast<std::size_t>(n);
  set.m = m;
  set.c = c;
  set.d = has_features ? d : 0;
  const std::size_t mc = static_cast<std::size_t>(m) * c;
  set.gt.resize(set.n);
  set.probs.resize(set.n * mc);
  if (has_logits) set.logits.resize(set.n * mc);
  if (has_features) set.features.resize(set.n * d);
  for (std::size_t i = 0; i < set.n; ++i) {
    set.gt[i] = in.uint<std::uint32_t>();
    for (std::size_t k = 0; k < mc; ++k) set.probs[i * mc + k] = in.f32();
    if (has_logits)
      for (std::size_t k = 0; k < mc; ++k) set.logits[i * mc + k] = in.f32();
    if (has_features)
      for (std::size_t k = 0; k < d; ++k) set.features[i * d + k] = in.f32();
  }
  const std::size_t rescaled = normalize_probabilities(set);
  if (stats) stats->renormalized_rows = rescaled;
  return set;
}

void write_prediction_set(const PredictionSet& set, const std::filesystem::path& path) {
  set.validate_shape();
  if (set.m > 0xFFFF || set.c > 0xFFFF || set.d > 0xFFFF)
    throw PreconditionError("M, C and D must fit in 16 bits");
  const bool logits = set.has_logits();
  const bool features = set.has_features();
  std::vector<unsigned char> bytes;
  bytes.reserve(kHeaderBytes + set.n * point_stride(set.m, set.c, set.d, logits, features));
  bytes.insert(bytes.end(), kMagic, kMagic + 4);
  binary::put_uint<std::uint16_t>(bytes, kVersion);
  binary::put_uint<std::uint16_t>(bytes, (logits ? kFlagLogits : 0) | (features ? kFlagFeatures : 0));
  binary::put_uint<std::uint64_t>(bytes, set.n);
  binary::put_uint<std::uint16_t>(bytes, static_cast<std::uint16_t>(set.m));
  binary::put_uint<std::uint16_t>(bytes, static_cast<std::uint16_t>(set.c));
  binary::put_uint<std::uint16_t>(bytes, static_cast<std::uint16_t>(set.d));
  binary::put_uint<std::uint16_t>(bytes, 0);
  const std::size_t mc = static_cast<std::size_t>(set.m) * set.c;
  for (std::size_t i = 0; i < set.n; ++i) {
    binary::put_uint(bytes, set.gt[i]);
    for (std::size_t k = 0; k < mc; ++k) binary::put_f32(bytes, set.probs[i * mc + k]);
    if (logits)
      for (std::size_t k = 0; k < mc; ++k) binary::put_f32(bytes, set.logits[i * mc + k]);
    if (features)
      for (int k = 0; k < set.d; ++k) binary::put_f32(bytes, set.features[i * set.d + k]);
  }
  binary::write_file(path.string(), bytes);
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  return cells;
}

}  // namespace

PredictionSet import_prediction_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw HeaderInconsistent(path.string() + ": empty CSV");
  const auto header = split_csv(line);
  if (header.size() < 5 || header[0] != "point" || header[1] != "pass" || header[2] != "gt")
    throw HeaderInconsistent(path.string() + ": header must start with point,pass,gt");
  int c = 0, nl = 0, d = 0;
  for (std::size_t k = 3; k < header.size(); ++k) {
    const char kind = header[k].empty() ? '?' : header[k][0];
    if (kind == 'p') ++c;
    else if (kind == 'l') ++nl;
    else if (kind == 'f') ++d;
    else throw HeaderInconsistent("unexpected column '" + header[k] + "'");
  }
  if (nl != 0 && nl != c) throw HeaderInconsistent("logit column count must equal C");

  struct Row {
    std::size_t point, pass;
    std::uint32_t gt;
    std::vector<float> values;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw HeaderInconsistent("row " + std::to_string(rows.size() + 1) + " has wrong column count");
    Row row;
    row.point = std::stoul(cells[0]);
    row.pass = std::stoul(cells[1]);
    row.gt = cells[2] == "ignore" ? kIgnoreGt : static_cast<std::uint32_t>(std::stoul(cells[2]));
    for (std::size_t k = 3; k < cells.size(); ++k) row.values.push_back(std::stof(cells[k]));
    rows.push_back(std::move(row));
  }

  PredictionSet set;
  set.c = c;
  set.d = d;
  std::size_t m = 0;
  while (m < rows.size() && rows[m].point == rows[0].point) ++m;
  if (m == 0 || rows.size() % m != 0) throw HeaderInconsistent("ragged pass count");
  set.m = static_cast<int>(m);
  set.n = rows.size() / m;
  const std::size_t mc = m * c;
  set.gt.resize(set.n);
  set.probs.resize(set.n * mc);
  if (nl) set.logits.resize(set.n * mc);
  if (d) set.features.resize(set.n * d);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t i = r / m, pass = r % m;
    if (rows[r].point != rows[i * m].point || rows[r].pass != pass)
      throw HeaderInconsistent("rows must list passes 0..M-1 contiguously per point");
    if (pass == 0) set.gt[i] = rows[r].gt;
    const auto& v = rows[r].values;
    for (int k = 0; k < c; ++k) set.probs[i * mc + pass * c + k] = v[k];
    for (int k = 0; k < nl; ++k) set.logits[i * mc + pass * c + k] = v[c + k];
    if (pass == 0)
      for (int k = 0; k < d; ++k) set.features[i * d + k] = v[c + nl + k];
  }
  normalize_probabilities(set);
  return set;
}

}  // namespace levk
