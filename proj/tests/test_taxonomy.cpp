#include <doctest.h>

#include <cmath>
#include <random>

#include "levk/errors.hpp"
#include "levk/taxonomy.hpp"
#include "scene.hpp"

using namespace levk;

namespace {

ClassTable two_class_table(std::map<std::uint32_t, ClassId> merge) {
  std::vector<ClassInfo> classes{{0, "road", "ro", ScaleGroup::large, {}}, {1, "car", "ca", ScaleGroup::large, {}}};
  return ClassTable(classes, std::move(merge), {});
}

// Independent closed form: (1 - beta) / (1 - beta^(n/unit)), optionally / (1 - beta).
double weight_oracle(double n, double beta, double unit, bool normalize) {
  const double w = (1.0 - beta) / (1.0 - std::pow(beta, n / unit));
  return normalize ? w / (1.0 - beta) : w;
}

}  // namespace

TEST_CASE("merge_labels maps raw ids through the table") {
  const auto t = two_class_table({{40, 0}, {48, 0}, {10, 1}});
  const std::vector<std::uint32_t> same{40, 40};
  CHECK(merge_labels(same, t) == std::vector<ClassId>{0, 0});
  const std::vector<std::uint32_t> parking{48};
  CHECK(merge_labels(parking, t) == std::vector<ClassId>{0});
}

TEST_CASE("merge_labels reports the first unmapped raw label") {
  const auto t = two_class_table({{40, 0}});
  const std::vector<std::uint32_t> raw{40, 99, 98};
  try {
    merge_labels(raw, t);
    FAIL("expected UnmappedRawLabel");
  } catch (const UnmappedRawLabel& e) {
    CHECK(e.raw() == 99);
    CHECK(e.index() == 1);
  }
  const std::vector<std::uint32_t> only{99};
  CHECK_THROWS_AS(merge_labels(only, t), UnmappedRawLabel);
}

TEST_CASE("merge through an identity map is idempotent") {
  const auto table = testkit::kitti_table();
  const auto identity = table.merged_identity();
  std::mt19937_64 rng(7);
  std::vector<std::uint32_t> raw;
  const auto& map = table.merge_map();
  std::vector<std::uint32_t> keys;
  for (const auto& [k, v] : map) keys.push_back(k);
  for (int i = 0; i < 500; ++i) raw.push_back(keys[rng() % keys.size()]);
  const auto once = merge_labels(raw, table);
  std::vector<std::uint32_t> encoded;
  for (ClassId c : once) encoded.push_back(c == kIgnore ? kIgnoreWord : static_cast<std::uint32_t>(c));
  const auto twice = merge_labels(encoded, identity);
  CHECK(twice == once);
}

TEST_CASE("ignore entries decode to kIgnore") {
  const auto table = testkit::kitti_table();
  CHECK(table.merge(0) == kIgnore);
  CHECK(table.merge(40) == table.id_of("road"));
  CHECK(table.merge(48) == table.id_of("road"));
  CHECK(table.merge(30) == table.id_of("people"));
}

TEST_CASE("class table invariants are enforced") {
  SUBCASE("duplicate names") {
    std::vector<ClassInfo> classes{{0, "a", "a", ScaleGroup::large, {}}, {1, "a", "b", ScaleGroup::large, {}}};
    CHECK_THROWS_AS(ClassTable(classes, {}, {}), ConfigError);
  }
  SUBCASE("non-contiguous ids") {
    std::vector<ClassInfo> classes{{0, "a", "a", ScaleGroup::large, {}}, {2, "b", "b", ScaleGroup::large, {}}};
    CHECK_THROWS_AS(ClassTable(classes, {}, {}), ConfigError);
  }
  SUBCASE("ood outside the table") {
    std::vector<ClassInfo> classes{{0, "a", "a", ScaleGroup::large, {}}, {1, "b", "b", ScaleGroup::large, {}}};
    CHECK_THROWS_AS(ClassTable(classes, {}, {5}), ConfigError);
  }
  SUBCASE("merge target outside the table") {
    std::vector<ClassInfo> classes{{0, "a", "a", ScaleGroup::large, {}}, {1, "b", "b", ScaleGroup::large, {}}};
    CHECK_THROWS_AS(ClassTable(classes, {{3, 7}}, {}), ConfigError);
  }
}

TEST_CASE("shipped configs load and agree on the class list") {
  const auto kitti = testkit::kitti_table();
  const auto poss = ClassTable::load(testkit::source_dir() / "config" / "semanticposs.json");
  const auto sub = ClassTable::load(testkit::source_dir() / "config" / "subkitti.json");
  REQUIRE(kitti.size() == 11);
  REQUIRE(poss.size() == 11);
  for (ClassId c = 0; c < 11; ++c) {
    CHECK(kitti.name(c) == poss.name(c));
    CHECK(kitti.name(c) == sub.name(c));
  }
  CHECK(kitti.ood_set() == std::vector<ClassId>{kitti.id_of("people"), kitti.id_of("rider")});
  CHECK(kitti.id_classes().size() == 9);
  CHECK(testkit::kitti_exp1_table().ood_set().empty());
  CHECK(kitti.info(kitti.id_of("trunk")).group == ScaleGroup::middle);
  CHECK(kitti.find("ri") == kitti.id_of("rider"));
}

TEST_CASE("class table survives a JSON round trip") {
  const auto kitti = testkit::kitti_table();
  const auto again = ClassTable::from_json(kitti.to_json());
  CHECK(again.size() == kitti.size());
  CHECK(again.merge_map() == kitti.merge_map());
  CHECK(again.ood_set() == kitti.ood_set());
  for (ClassId c = 0; c < static_cast<ClassId>(kitti.size()); ++c) {
    CHECK(again.info(c).name == kitti.info(c).name);
    CHECK(again.info(c).group == kitti.info(c).group);
    CHECK(again.info(c).train_count == kitti.info(c).train_count);
  }
}

TEST_CASE("prediction columns cover either all classes or ID classes") {
  const auto kitti = testkit::kitti_table();
  CHECK(kitti.prediction_columns(11).size() == 11);
  const auto id = kitti.prediction_columns(9);
  CHECK(id == kitti.id_classes());
  CHECK_THROWS_AS(kitti.prediction_columns(5), PreconditionError);
}

TEST_CASE("class weights match the published SemanticKITTI values") {
  // SemanticKITTI train counts: rider 0.386M -> 25.09, trunk 12.43M -> 1.36.
  const auto w = class_weights({{0.386e6, 12.43e6}, 1e6}, 0.9);
  CHECK(std::abs(w[0] - 25.09) <= 0.01);
  CHECK(std::abs(w[1] - 1.36) <= 0.01);
}

TEST_CASE("class weight closed form at one unit") {
  const auto w = class_weights({{1.0e6}, 1e6}, 0.9);
  CHECK(w[0] == doctest::Approx(10.0).epsilon(1e-12));
  const auto raw = class_weights({{1.0e6}, 1e6}, 0.9, false);
  CHECK(raw[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("class weights against the closed-form oracle") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> logn(3.0, 9.5), beta(0.5, 0.999);
  for (int trial = 0; trial < 200; ++trial) {
    const double b = beta(rng);
    const double n = std::pow(10.0, logn(rng));
    for (bool normalize : {true, false}) {
      const double got = class_weights({{n}, 1e6}, b, normalize)[0];
      CHECK(got == doctest::Approx(weight_oracle(n, b, 1e6, normalize)).epsilon(1e-9));
    }
  }
}

TEST_CASE("normalized weights decrease with count and stay above one") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> logn(2.0, 10.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> counts(12);
    for (auto& n : counts) n = std::pow(10.0, logn(rng));
    std::sort(counts.begin(), counts.end());
    counts.erase(std::unique(counts.begin(), counts.end()), counts.end());
    const auto w = class_weights({counts, 1e6}, 0.9);
    for (std::size_t i = 0; i < w.size(); ++i) {
      CHECK(w[i] >= 1.0);
      if (i > 0) CHECK(w[i] <= w[i - 1]);
      if (i > 0 && counts[i] < 3e8) CHECK(w[i] < w[i - 1]);
    }
  }
  const auto huge = class_weights({{1e12}, 1e6}, 0.9);
  CHECK(huge[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zero count has no weight") {
  try {
    class_weights({{5.0e6, 0.0}, 1e6}, 0.9);
    FAIL("expected DegenerateCount");
  } catch (const DegenerateCount& e) {
    CHECK(e.class_index() == 1);
  }
  CHECK_THROWS_AS(class_weights({{1.0}, 1e6}, 1.0), PreconditionError);
  CHECK_THROWS_AS(class_weights({{1.0}, 0.0}, 0.9), PreconditionError);
}

TEST_CASE("train counts follow table order and default to zero") {
  const auto sub = ClassTable::load(testkit::source_dir() / "config" / "subkitti.json");
  const auto counts = train_counts(sub);
  REQUIRE(counts.counts.size() == 11);
  CHECK(counts.counts[0] == doctest::Approx(491.66e6));
  CHECK(counts.counts[9] == 0.0);
  CHECK(counts.unit_scale == 1e6);
}
