#include <doctest.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include "levk/errors.hpp"
#include "levk/lidar_io.hpp"
#include "scene.hpp"

using namespace levk;
using testkit::TempDir;

namespace {

// Little-endian encoders written independently of the library's helpers.
void le32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<unsigned char>((v >> (8 * k)) & 0xFF));
}
void le16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}
void le64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<unsigned char>((v >> (8 * k)) & 0xFF));
}
void lef(std::vector<unsigned char>& out, float v) { le32(out, std::bit_cast<std::uint32_t>(v)); }

void dump(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                           static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> levk_header(std::uint16_t flags, std::uint64_t n, std::uint16_t m, std::uint16_t c,
                                       std::uint16_t d) {
  std::vector<unsigned char> b{'L', 'E', 'V', 'K'};
  le16(b, 1);
  le16(b, flags);
  le64(b, n);
  le16(b, m);
  le16(b, c);
  le16(b, d);
  le16(b, 0);
  return b;
}

}  // namespace

TEST_CASE("point frame decodes hand-built bytes") {
  TempDir dir;
  std::vector<unsigned char> b;
  for (float v : {1.0f, 2.0f, 3.0f, 0.5f, -1.0f, 0.0f, 2.0f, 0.1f}) lef(b, v);
  REQUIRE(b.size() == 32);
  dump(dir / "000042.bin", b);
  const auto f = read_point_frame(dir / "000042.bin");
  REQUIRE(f.size() == 2);
  CHECK(f.frame_id == "000042");
  CHECK(f.points(0, 0) == 1.0f);
  CHECK(f.points(0, 2) == 3.0f);
  CHECK(f.points(0, 3) == 0.5f);
  CHECK(f.points(1, 0) == -1.0f);
  CHECK(f.points(1, 3) == 0.1f);
}

TEST_CASE("point frame edge cases") {
  TempDir dir;
  dump(dir / "empty.bin", {});
  CHECK(read_point_frame(dir / "empty.bin").size() == 0);

  dump(dir / "odd.bin", std::vector<unsigned char>(17, 0));
  CHECK_THROWS_AS(read_point_frame(dir / "odd.bin"), TruncatedFile);

  std::vector<unsigned char> b;
  for (float v : {1.0f, 2.0f, 3.0f, 0.5f, 1.0f, std::numeric_limits<float>::quiet_NaN(), 0.0f, 0.0f}) lef(b, v);
  dump(dir / "nan.bin", b);
  try {
    read_point_frame(dir / "nan.bin");
    FAIL("expected NonFiniteValue");
  } catch (const NonFiniteValue& e) {
    CHECK(e.index() == 1);
  }
  CHECK_THROWS_AS(read_point_frame(dir / "missing.bin"), IoFailure);
}

TEST_CASE("label words split low 16 semantic, high 16 instance") {
  CHECK(split_label_word(0x0001002Au) == std::pair<std::uint16_t, std::uint16_t>{42, 1});
  CHECK(split_label_word(0u) == std::pair<std::uint16_t, std::uint16_t>{0, 0});
  CHECK(split_label_word(0xFFFF0000u) == std::pair<std::uint16_t, std::uint16_t>{0, 0xFFFF});
  static_assert(join_label_word(42, 1) == 0x0001002Au);

  TempDir dir;
  std::vector<unsigned char> b{0x2A, 0x00, 0x01, 0x00, 0x0A, 0x00, 0x07, 0x00, 0xFC, 0x00, 0x34, 0x12};
  dump(dir / "f.label", b);
  const auto l = read_label_frame(dir / "f.label", 3);
  CHECK(l.labels == std::vector<std::uint16_t>{42, 10, 252});
  CHECK(l.instance_ids == std::vector<std::uint16_t>{1, 7, 0x1234});
}

TEST_CASE("label frame length mismatch") {
  TempDir dir;
  dump(dir / "f.label", std::vector<unsigned char>(8, 0));
  try {
    read_label_frame(dir / "f.label", 3);
    FAIL("expected LengthMismatch");
  } catch (const LengthMismatch& e) {
    CHECK(e.found() == 2);
    CHECK(e.expected() == 3);
  }
}

TEST_CASE("augmented frame pair round trips") {
  TempDir dir;
  PointFrame f;
  f.frame_id = "000007";
  f.points.resize(2, 4);
  f.points << 1, 2, 3, 0.5f, -1, 0, 2, 0.1f;
  LabelFrame l{{40, 30}, {0, 3}};
  const auto pair = write_augmented_frame(f, l, dir.path());
  const auto f2 = read_point_frame(pair.points);
  const auto l2 = read_label_frame(pair.labels, 2);
  CHECK(f2.points == f.points);
  CHECK(l2.labels == l.labels);
  CHECK(l2.instance_ids == l.instance_ids);

  PointFrame empty;
  empty.frame_id = "000008";
  const auto p0 = write_augmented_frame(empty, {}, dir.path());
  CHECK(std::filesystem::file_size(p0.points) == 0);
  CHECK(std::filesystem::file_size(p0.labels) == 0);
  CHECK(read_point_frame(p0.points).size() == 0);

  LabelFrame short_labels{{40}, {0}};
  CHECK_THROWS_AS(write_augmented_frame(f, short_labels, dir.path()), PreconditionError);
}

TEST_CASE("prediction set from hand-built bytes") {
  TempDir dir;
  auto b = levk_header(0, 1, 1, 2, 0);
  le32(b, 0);
  lef(b, 0.6f);
  lef(b, 0.4f);
  dump(dir / "a.levk", b);
  const auto set = read_prediction_set(dir / "a.levk");
  REQUIRE(set.n == 1);
  CHECK(set.gt_class(0) == 0);
  CHECK(set.prob_passes(0)(0, 0) == 0.6f);
  // predicted label is the arg-max of the mean probability
  Eigen::Index arg;
  set.prob_passes(0).colwise().mean().maxCoeff(&arg);
  CHECK(arg == 0);
}

TEST_CASE("prediction set rejects malformed files") {
  TempDir dir;
  SUBCASE("unnormalized") {
    auto b = levk_header(0, 1, 1, 2, 0);
    le32(b, 0);
    lef(b, 0.7f);
    lef(b, 0.7f);
    dump(dir / "x.levk", b);
    try {
      read_prediction_set(dir / "x.levk");
      FAIL("expected ProbabilityNotNormalized");
    } catch (const ProbabilityNotNormalized& e) {
      CHECK(e.index() == 0);
    }
  }
  SUBCASE("bad magic") {
    auto b = levk_header(0, 0, 1, 2, 0);
    b[0] = 'X';
    dump(dir / "x.levk", b);
    CHECK_THROWS_AS(read_prediction_set(dir / "x.levk"), BadMagic);
  }
  SUBCASE("payload disagrees with header") {
    auto b = levk_header(0, 2, 1, 2, 0);
    le32(b, 0);
    lef(b, 0.5f);
    lef(b, 0.5f);
    dump(dir / "x.levk", b);
    CHECK_THROWS_AS(read_prediction_set(dir / "x.levk"), HeaderInconsistent);
    b.push_back(0);
    dump(dir / "y.levk", b);
    CHECK_THROWS_AS(read_prediction_set(dir / "y.levk"), HeaderInconsistent);
  }
  SUBCASE("feature flag without D") {
    dump(dir / "x.levk", levk_header(2, 0, 1, 2, 0));
    CHECK_THROWS_AS(read_prediction_set(dir / "x.levk"), HeaderInconsistent);
  }
  SUBCASE("C below two") {
    dump(dir / "x.levk", levk_header(0, 0, 1, 1, 0));
    CHECK_THROWS_AS(read_prediction_set(dir / "x.levk"), HeaderInconsistent);
  }
  SUBCASE("huge N does not allocate") {
    dump(dir / "x.levk", levk_header(0, 1ull << 60, 1, 2, 0));
    CHECK_THROWS_AS(read_prediction_set(dir / "x.levk"), HeaderInconsistent);
  }
}

TEST_CASE("probability rows are renormalized only inside the tolerance band") {
  TempDir dir;
  auto b = levk_header(0, 2, 1, 2, 0);
  le32(b, 1);
  lef(b, 0.50002f);  // |sum - 1| = 2e-5 -> untouched
  lef(b, 0.5f);
  le32(b, 0);
  lef(b, 0.503f);  // 3e-3 -> rescaled
  lef(b, 0.5f);
  dump(dir / "r.levk", b);
  PredictionReadStats stats;
  const auto set = read_prediction_set(dir / "r.levk", &stats);
  CHECK(stats.renormalized_rows == 1);
  CHECK(set.probs[0] == 0.50002f);
  CHECK(set.probs[2] + set.probs[3] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(set.probs[2] == doctest::Approx(0.503 / 1.003).epsilon(1e-6));
}

TEST_CASE("prediction set byte layout matches the documented format") {
  TempDir dir;
  PredictionSet s;
  s.n = 1;
  s.m = 1;
  s.c = 2;
  s.d = 1;
  s.gt = {kIgnoreGt};
  s.probs = {0.25f, 0.75f};
  s.logits = {-1.0f, 1.0f};
  s.features = {3.5f};
  write_prediction_set(s, dir / "s.levk");
  auto expect = levk_header(3, 1, 1, 2, 1);
  le32(expect, 0xFFFFFFFFu);
  for (float v : {0.25f, 0.75f, -1.0f, 1.0f, 3.5f}) lef(expect, v);
  CHECK(testkit::file_bytes(dir / "s.levk") == expect);
  CHECK(read_prediction_set(dir / "s.levk").gt_class(0) == kIgnore);
}

TEST_CASE("random containers round trip exactly") {
  TempDir dir;
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = rng() % 300;
    const auto f = testkit::random_frame(rng, n, "f" + std::to_string(trial));
    const auto l = testkit::random_labels(rng, n);
    write_point_frame(f, dir / "f.bin");
    write_label_frame(l, dir / "f.label");
    CHECK(read_point_frame(dir / "f.bin").points == f.points);
    const auto l2 = read_label_frame(dir / "f.label", n);
    CHECK(l2.labels == l.labels);
    CHECK(l2.instance_ids == l.instance_ids);

    const int m = 1 + static_cast<int>(rng() % 5), c = 2 + static_cast<int>(rng() % 10);
    const int d = static_cast<int>(rng() % 4);
    const auto s = testkit::random_prediction_set(rng, n, m, c, d, rng() % 2, static_cast<std::size_t>(c));
    write_prediction_set(s, dir / "s.levk");
    const auto s2 = read_prediction_set(dir / "s.levk");
    CHECK(s2.n == s.n);
    CHECK(s2.m == s.m);
    CHECK(s2.c == s.c);
    CHECK(s2.d == s.d);
    CHECK(s2.gt == s.gt);
    CHECK(s2.probs == s.probs);
    CHECK(s2.logits == s.logits);
    CHECK(s2.features == s.features);
  }
}

TEST_CASE("merged label frames use the ignore word") {
  const auto table = testkit::kitti_table();
  LabelFrame raw{{40, 0, 30, 10}, {0, 0, 5, 2}};
  const auto merged = merge_label_frame(raw, table);
  CHECK(merged.labels == std::vector<std::uint16_t>{static_cast<std::uint16_t>(table.id_of("road")), kIgnoreWord,
                                                     static_cast<std::uint16_t>(table.id_of("people")),
                                                     static_cast<std::uint16_t>(table.id_of("car"))});
  CHECK(merged.instance_ids == raw.instance_ids);
  const auto classes = class_labels(merged, table);
  CHECK(classes[1] == kIgnore);
  CHECK(classes[2] == table.id_of("people"));
  LabelFrame bad{{200}, {0}};
  CHECK_THROWS_AS(class_labels(bad, table), UnmappedRawLabel);
}

TEST_CASE("CSV fixture import") {
  TempDir dir;
  std::ofstream(dir / "p.csv") << "point,pass,gt,p0,p1,l0,l1,f0\n"
                                  "0,0,1,0.2,0.8,0,1,0.5\n"
                                  "0,1,1,0.4,0.6,0,0.5,9\n"
                                  "1,0,ignore,0.5,0.5,1,1,-2\n"
                                  "1,1,ignore,1,0,2,0,7\n";
  const auto s = import_prediction_csv(dir / "p.csv");
  CHECK(s.n == 2);
  CHECK(s.m == 2);
  CHECK(s.c == 2);
  CHECK(s.d == 1);
  CHECK(s.gt_class(0) == 1);
  CHECK(s.gt_class(1) == kIgnore);
  CHECK(s.prob_passes(0)(1, 0) == 0.4f);
  CHECK(s.logit_passes(0)(1, 1) == 0.5f);
  CHECK(s.feature(0)(0) == 0.5f);
  CHECK(s.feature(1)(0) == -2.0f);

  std::ofstream(dir / "bad.csv") << "point,pass,gt,p0,p1\n0,0,0,0.9,0.9\n";
  CHECK_THROWS_AS(import_prediction_csv(dir / "bad.csv"), ProbabilityNotNormalized);
  std::ofstream(dir / "hdr.csv") << "idx,pass,gt,p0,p1\n";
  CHECK_THROWS_AS(import_prediction_csv(dir / "hdr.csv"), HeaderInconsistent);
}

TEST_CASE("manifest paths resolve against the manifest directory") {
  TempDir dir;
  std::filesystem::create_directories(dir / "sub");
  Manifest m;
  m.frames.push_back({"a", dir / "sub" / "a.bin", dir / "sub" / "a.label", {}});
  m.frames.push_back({"b", dir / "b.bin", {}, dir / "preds" / "b.levk"});
  m.save(dir / "manifest.json");
  std::ifstream in(dir / "manifest.json");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text.find("sub/a.bin") != std::string::npos);
  CHECK(text.find(dir.path().string()) == std::string::npos);
  const auto back = Manifest::load(dir / "manifest.json");
  REQUIRE(back.frames.size() == 2);
  CHECK(back.frames[0].points.lexically_normal() == (dir / "sub" / "a.bin").lexically_normal());
  CHECK(back.frames[1].labels.empty());
  CHECK(back.frames[1].predictions.lexically_normal() == (dir / "preds" / "b.levk").lexically_normal());
}

TEST_CASE("feature dimension survives an empty prediction set") {
  TempDir dir;
  PredictionSet empty;
  empty.m = 2;
  empty.c = 3;
  empty.d = 8;
  write_prediction_set(empty, dir / "e.levk");
  const auto back = read_prediction_set(dir / "e.levk");
  CHECK(back.n == 0);
  CHECK(back.d == 8);
  CHECK(back.has_features());

  PredictionSet missing = empty;
  missing.n = 1;
  missing.gt = {0};
  missing.probs.assign(6, 1.0f / 3.0f);
  CHECK_THROWS_AS(write_prediction_set(missing, dir / "m.levk"), HeaderInconsistent);
}
