#include <doctest.h>

#include <cmath>
#include <random>

#include "levk/errors.hpp"
#include "levk/seg_metrics.hpp"
#include "scene.hpp"

using namespace levk;

namespace {

ClassTable plain_table(int n, std::vector<ClassId> ood = {}) {
  std::vector<ClassInfo> classes;
  for (int i = 0; i < n; ++i) classes.push_back({i, "c" + std::to_string(i), "c" + std::to_string(i), ScaleGroup::large, {}});
  return ClassTable(classes, {}, std::move(ood));
}

PredictionSet one_pass_set(std::vector<std::uint32_t> gt, std::vector<std::vector<float>> probs) {
  PredictionSet s;
  s.n = gt.size();
  s.m = 1;
  s.c = static_cast<int>(probs.front().size());
  s.gt = std::move(gt);
  for (const auto& p : probs) s.probs.insert(s.probs.end(), p.begin(), p.end());
  return s;
}

}  // namespace

TEST_CASE("two-class confusion example") {
  const auto table = plain_table(2);
  const std::vector<ClassId> gt{0, 0, 1, 1}, pd{0, 1, 1, 1};
  const auto cm = confusion_matrix(gt, pd, table);
  CHECK(cm.count(0, 0) == 1);
  CHECK(cm.count(0, 1) == 1);
  CHECK(cm.count(1, 1) == 2);
  CHECK(*cm.ratio(0, 0) == 0.5);
  CHECK(*cm.ratio(0, 1) == 0.5);
  CHECK(*cm.ratio(1, 0) == 0.0);
  CHECK(*cm.ratio(1, 1) == 1.0);

  const auto m = class_metrics(cm);
  // hand evaluation: Pre(1) = 2/3, Rec(1) = 1, IoU(1) = 2/3, wPre(1) = 1/(0.5+1), wPre(0) = 1
  CHECK(*m[1].pre == doctest::Approx(2.0 / 3.0));
  CHECK(*m[1].rec == 1.0);
  CHECK(*m[1].iou == doctest::Approx(2.0 / 3.0));
  CHECK(*m[1].wpre == doctest::Approx(1.0 / 1.5));
  CHECK(*m[1].eta == doctest::Approx(1.5));
  CHECK(*m[0].wpre == 1.0);
  CHECK(*m[0].pre == 1.0);
  CHECK(*m[0].rec == 0.5);
  CHECK(*m[0].iou == 0.5);

  const auto v = wpr_bcr(cm);
  REQUIRE(v.wpr[0].size() == 1);
  CHECK(v.wpr[0][0] == std::pair<ClassId, double>{1, 0.5});
  REQUIRE(v.bcr[1].size() == 1);
  CHECK(v.bcr[1][0] == std::pair<ClassId, double>{0, 0.5});
}

TEST_CASE("perfect prediction gives the identity") {
  const auto table = plain_table(4);
  std::vector<ClassId> gt;
  for (int i = 0; i < 40; ++i) gt.push_back(i % 4);
  const auto cm = confusion_matrix(gt, gt, table);
  CHECK(cm.ratios().isApprox(Eigen::MatrixXd::Identity(4, 4)));
  for (const auto& m : class_metrics(cm)) {
    CHECK(m.present);
    CHECK(*m.iou == 1.0);
    CHECK(*m.pre == 1.0);
    CHECK(*m.rec == 1.0);
    CHECK(*m.wpre == 1.0);
    CHECK(*m.not_wpre == 0.0);
  }
  const auto v = wpr_bcr(cm);
  for (const auto& row : v.wpr)
    for (const auto& [c, r] : row) CHECK(r == 0.0);
}

TEST_CASE("ignored ground truth leaves every row absent") {
  const auto table = plain_table(3);
  const std::vector<ClassId> gt{kIgnore, kIgnore}, pd{0, 1};
  const auto cm = confusion_matrix(gt, pd, table);
  CHECK(cm.total() == 0);
  for (ClassId r = 0; r < 3; ++r) {
    CHECK_FALSE(cm.row_present(r));
    CHECK_FALSE(cm.ratio(r, 0).has_value());
  }
  for (const auto& m : class_metrics(cm)) {
    CHECK_FALSE(m.present);
    CHECK_FALSE(m.iou.has_value());
    CHECK_FALSE(m.rec.has_value());
  }
}

TEST_CASE("never-predicted class is absent but keeps recall") {
  const auto table = plain_table(3);
  const std::vector<ClassId> gt{0, 1, 2, 2}, pd{0, 1, 1, 0};
  const auto m = class_metrics(confusion_matrix(gt, pd, table));
  CHECK_FALSE(m[2].present);
  CHECK_FALSE(m[2].pre.has_value());
  CHECK_FALSE(m[2].wpre.has_value());
  CHECK(*m[2].rec == 0.0);
  CHECK(*m[2].iou == 0.0);
}

TEST_CASE("confusion input checks") {
  const auto table = testkit::kitti_table();
  const std::vector<ClassId> gt{0, 1}, pd{0};
  CHECK_THROWS_AS(confusion_matrix(gt, pd, table), LengthMismatch);
  const ClassId people = table.id_of("people");
  const std::vector<ClassId> gt2{people}, pd_ood{people};
  CHECK_THROWS_AS(confusion_matrix(gt2, pd_ood, table), PreconditionError);
  // OOD rows are kept; their columns stay empty.
  const std::vector<ClassId> pd_ok{0};
  const auto cm = confusion_matrix(gt2, pd_ok, table);
  CHECK(cm.count(people, 0) == 1);
  CHECK(cm.pd_total(people) == 0);
}

TEST_CASE("metric identities on random populations") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const int c = 2 + static_cast<int>(rng() % 10);
    const auto table = plain_table(c);
    const std::size_t n = rng() % 2000;
    std::vector<ClassId> gt(n), pd(n);
    for (std::size_t i = 0; i < n; ++i) {
      gt[i] = static_cast<ClassId>(rng() % c);
      pd[i] = rng() % 3 ? gt[i] : static_cast<ClassId>(rng() % c);
    }
    const auto cm = confusion_matrix(gt, pd, table);
    const auto p = cm.ratios();
    const auto m = class_metrics(cm);
    for (ClassId r = 0; r < c; ++r) {
      if (cm.row_present(r)) CHECK(std::abs(p.row(r).sum() - 1.0) <= 1e-9);
      if (m[r].rec) CHECK(*m[r].rec == doctest::Approx(p(r, r)).epsilon(1e-12));
      if (!m[r].present) continue;
      CHECK(std::abs(*m[r].pre + *m[r].not_pre - 1.0) <= 1e-9);
      if (m[r].wpre) CHECK(std::abs(*m[r].wpre + *m[r].not_wpre - 1.0) <= 1e-9);
      CHECK(*m[r].iou <= std::min(*m[r].pre, m[r].rec.value_or(0.0)) + 1e-12);
      if (!m[r].rec) continue;
      const double pr = *m[r].pre, rc = *m[r].rec;
      if (pr + rc > 0) CHECK(std::abs(*m[r].iou - pr * rc / (pr + rc - pr * rc)) <= 1e-9);
    }
    const auto v = wpr_bcr(cm);
    for (ClassId r = 0; r < c; ++r) {
      if (!cm.row_present(r)) continue;
      double off = 0.0;
      for (const auto& [k, ratio] : v.wpr[r]) off += ratio;
      CHECK(std::abs(off - (1.0 - *m[r].rec)) <= 1e-9);
    }
  }
}

TEST_CASE("confusion counts merge associatively") {
  std::mt19937_64 rng(12);
  const auto table = plain_table(5);
  std::vector<ClassId> gt(3000), pd(3000);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    gt[i] = static_cast<ClassId>(rng() % 5);
    pd[i] = static_cast<ClassId>(rng() % 5);
  }
  const auto whole = confusion_matrix(gt, pd, table);
  ConfusionMatrix merged(5);
  for (std::size_t a = 0; a < gt.size(); a += 700) {
    const std::size_t len = std::min<std::size_t>(700, gt.size() - a);
    merged += confusion_matrix(std::span(gt).subspan(a, len), std::span(pd).subspan(a, len), table);
  }
  CHECK(merged.counts() == whole.counts());
}

TEST_CASE("weighted precision reacts to small-class confusion") {
  // Tiny class 1 (10 points) entirely predicted as big class 0 (10000 points).
  const auto table = plain_table(2);
  std::vector<ClassId> gt, pd;
  for (int i = 0; i < 10000; ++i) {
    gt.push_back(0);
    pd.push_back(0);
  }
  for (int i = 0; i < 10; ++i) {
    gt.push_back(1);
    pd.push_back(0);
  }
  const auto m = class_metrics(confusion_matrix(gt, pd, table));
  CHECK(*m[0].not_wpre > *m[0].not_pre);
  CHECK(*m[0].wpre == doctest::Approx(0.5));
}

TEST_CASE("per-class NLL") {
  const auto table = plain_table(2);
  const auto perfect = per_class_nll(one_pass_set({0, 0}, {{1.0f, 0.0f}, {1.0f, 0.0f}}), table);
  CHECK(*perfect[0] == 0.0);
  CHECK_FALSE(perfect[1].has_value());

  const auto half = per_class_nll(one_pass_set({1}, {{0.5f, 0.5f}}), table);
  CHECK(*half[1] == doctest::Approx(std::log(2.0)).epsilon(1e-7));

  const auto two = per_class_nll(one_pass_set({1, 1}, {{0.5f, 0.5f}, {0.75f, 0.25f}}), table);
  CHECK(*two[1] == doctest::Approx((std::log(2.0) + std::log(4.0)) / 2.0).epsilon(1e-7));

  // saturated wrong prediction is clipped by the floor
  const auto clipped = per_class_nll(one_pass_set({1}, {{1.0f, 0.0f}}), table);
  CHECK(*clipped[1] == doctest::Approx(-std::log(1e-12)));
}

TEST_CASE("per-class NLL uses the pass mean and skips ignore") {
  const auto table = plain_table(2);
  PredictionSet s;
  s.n = 2;
  s.m = 2;
  s.c = 2;
  s.gt = {0, kIgnoreGt};
  s.probs = {0.2f, 0.8f, 0.6f, 0.4f, 0.5f, 0.5f, 0.5f, 0.5f};
  const auto nll = per_class_nll(s, table);
  CHECK(*nll[0] == doctest::Approx(-std::log(0.4)).epsilon(1e-6));
  CHECK_FALSE(nll[1].has_value());
}

TEST_CASE("weighted cross-entropy") {
  const auto table = plain_table(2);
  const auto s = one_pass_set({1}, {{0.5f, 0.5f}});
  const std::vector<double> w{1.0, 2.0};
  const auto l = weighted_ce(s, table, w);
  CHECK(l.present);
  CHECK(l.loss == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-7));

  const auto mixed = one_pass_set({0, 1, 1}, {{0.25f, 0.75f}, {0.5f, 0.5f}, {0.5f, 0.5f}});
  const std::vector<double> ones{1.0, 1.0};
  const auto plain = weighted_ce(mixed, table, ones);
  CHECK(plain.loss == doctest::Approx((std::log(4.0) + 2.0 * std::log(2.0)) / 3.0).epsilon(1e-7));

  PredictionSet empty;
  empty.c = 2;
  const auto none = weighted_ce(empty, table, ones);
  CHECK_FALSE(none.present);
  CHECK(none.loss == 0.0);

  const std::vector<double> short_w{1.0};
  CHECK_THROWS_AS(weighted_ce(s, table, short_w), LengthMismatch);
}

TEST_CASE("OOD ground truth contributes no loss in ID-only predictions") {
  const auto table = testkit::kitti_table();
  PredictionSet s;
  s.n = 1;
  s.m = 1;
  s.c = 9;
  s.gt = {static_cast<std::uint32_t>(table.id_of("people"))};
  s.probs.assign(9, 1.0f / 9.0f);
  LossAccumulator acc(table);
  acc.add(s);
  CHECK(acc.scored_points() == 0);
}
