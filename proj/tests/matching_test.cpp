#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "lsadapt/matching.hpp"

namespace lsadapt {
namespace {

Box3 cube(double x, double y, double z, double side = 2.0) { return Box3({x, y, z}, {side, side, side}); }
Detection det(const Box3& b, double c) { return Detection(b, c); }

TEST(Detection, ConfidenceRange) {
  EXPECT_THROW(Detection(cube(0, 0, 0), 1.5), std::invalid_argument);
  EXPECT_THROW(Detection(cube(0, 0, 0), -0.1), std::invalid_argument);
}

TEST(RanksBefore, TieRule) {
  const Detection big(cube(0, 0, 0, 3), 0.5), small(cube(0, 0, 0, 2), 0.5);
  EXPECT_TRUE(ranks_before(big, small));
  const Detection left(cube(0, 0, 0), 0.5), right(cube(1, 0, 0), 0.5);
  EXPECT_TRUE(ranks_before(left, right));
  EXPECT_FALSE(ranks_before(right, left));
  EXPECT_TRUE(ranks_before(Detection(cube(9, 9, 9), 0.6), left));
}

TEST(Nms, IdenticalBoxesKeepHigher) {
  const auto kept = nms3d({det(cube(0, 0, 0), 0.8), det(cube(0, 0, 0), 0.9)}, 0.25);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].confidence(), 0.9);
}

TEST(Nms, DisjointBoxesSurvive) {
  EXPECT_EQ(nms3d({det(cube(0, 0, 0), 0.8), det(cube(10, 0, 0), 0.9)}, 0.25).size(), 2u);
}

TEST(Nms, ChainKeepsEnds) {
  // A-B and B-C overlap with IoU 1/3, A and C are disjoint.
  const Detection a = det(cube(0, 0, 0), 0.9), b = det(cube(1, 0, 0), 0.8), c = det(cube(2, 0, 0), 0.7);
  const auto kept = nms3d({c, b, a}, 0.25);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0], a);
  EXPECT_EQ(kept[1], c);
}

TEST(Nms, ThresholdIsInclusiveForKeeping) {
  // IoU exactly 1/3: kept at threshold 1/3, suppressed just below.
  const std::vector<Detection> d{det(Box3({0, 0, 0}, {1, 1, 1}), 0.9), det(Box3({0.5, 0, 0}, {1, 1, 1}), 0.8)};
  EXPECT_EQ(nms3d(d, 1.0 / 3.0 + 1e-12).size(), 2u);
  EXPECT_EQ(nms3d(d, 0.3).size(), 1u);
}

TEST(MatchGreedy, SingleExactHit) {
  const std::vector<Box3> gt{cube(0, 0, 0)};
  const MatchResult m = match_greedy({det(cube(0, 0, 0), 0.7)}, gt, 0.5);
  EXPECT_EQ(m.true_positives(), 1);
  EXPECT_EQ(m.false_positives(), 0);
  EXPECT_EQ(m.false_negatives(), 0);
}

TEST(MatchGreedy, DuplicateOnSameLesionIsFalsePositive) {
  const std::vector<Box3> gt{cube(0, 0, 0)};
  const MatchResult m = match_greedy({det(cube(0, 0, 0), 0.7), det(cube(0.1, 0, 0), 0.6)}, gt, 0.1);
  EXPECT_EQ(m.true_positives(), 1);
  EXPECT_EQ(m.false_positives(), 1);
  EXPECT_TRUE(m.is_tp[0]);
  EXPECT_FALSE(m.is_tp[1]);
}

TEST(MatchGreedy, BelowThresholdIsMiss) {
  // [0,3] and [2,5] along x, unit along y and z: intersection 1, union 5.
  const std::vector<Box3> gt{Box3({0, 0, 0}, {3, 1, 1})};
  const Detection d(Box3({2, 0, 0}, {3, 1, 1}), 0.9);
  ASSERT_NEAR(iou(d.box(), gt[0]), 0.2, 1e-15);
  const MatchResult m = match_greedy({d}, gt, 0.25);
  EXPECT_EQ(m.false_positives(), 1);
  EXPECT_EQ(m.false_negatives(), 1);
}

TEST(MatchGreedy, PicksBestUnmatchedGroundTruth) {
  const std::vector<Box3> gt{cube(0, 0, 0), cube(0.5, 0, 0)};
  // First detection sits on gt[1]; the second can then only take gt[0].
  const MatchResult m = match_greedy({det(cube(0.5, 0, 0), 0.9), det(cube(0.4, 0, 0), 0.8)}, gt, 0.1);
  EXPECT_EQ(m.true_positives(), 2);
  EXPECT_TRUE(m.gt_matched[0]);
  EXPECT_TRUE(m.gt_matched[1]);
}

// Worked fixture: two lesions, detections .9 (hit), .8 (miss), .7 (hit).
std::vector<EvalCase> worked_fixture() {
  EvalCase c;
  c.ground_truth = {cube(0, 0, 0), cube(20, 0, 0)};
  c.detections = {det(cube(0, 0, 0), 0.9), det(cube(40, 0, 0), 0.8), det(cube(20, 0, 0), 0.7)};
  return {c};
}

TEST(AveragePrecision, WorkedFixture) {
  const auto cases = worked_fixture();
  for (double iou_min : {0.1, 0.25, 0.5}) {
    EXPECT_NEAR(average_precision(cases, iou_min), 0.5 + (2.0 / 3.0) * 0.5, 1e-12);
  }
}

TEST(AveragePrecision, PerfectAndEmpty) {
  EvalCase c;
  c.ground_truth = {cube(0, 0, 0), cube(10, 0, 0)};
  EXPECT_EQ(average_precision(std::vector<EvalCase>{c}, 0.5), 0.0);
  c.detections = {det(cube(0, 0, 0), 0.9), det(cube(10, 0, 0), 0.3)};
  EXPECT_EQ(average_precision(std::vector<EvalCase>{c}, 0.5), 1.0);
}

TEST(AveragePrecision, NoGroundTruthThrows) {
  EvalCase c;
  c.detections = {det(cube(0, 0, 0), 0.9)};
  EXPECT_THROW(average_precision(std::vector<EvalCase>{c}, 0.5), std::invalid_argument);
  EXPECT_THROW(froc(std::vector<EvalCase>{c}, 0.1), std::invalid_argument);
}

TEST(Froc, WorkedFixturePoints) {
  const FrocCurve curve = froc(worked_fixture(), 0.1);
  ASSERT_EQ(curve.points.size(), 3u);
  EXPECT_DOUBLE_EQ(curve.points[0].sensitivity, 0.5);
  EXPECT_DOUBLE_EQ(curve.points[0].fp_per_scan, 0.0);
  EXPECT_DOUBLE_EQ(curve.points[1].fp_per_scan, 1.0);
  EXPECT_DOUBLE_EQ(curve.points[2].sensitivity, 1.0);
  EXPECT_DOUBLE_EQ(sensitivity_at(curve, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(sensitivity_at(curve, 1.0), 1.0);
}

TEST(Froc, StandardBudgets) {
  const auto b = standard_fp_budgets();
  EXPECT_EQ(std::vector<double>(b.begin(), b.end()), (std::vector<double>{0.125, 0.25, 0.5, 1, 2, 4, 8}));
}

TEST(Froc, EmptyDetectionsGiveZero) {
  EvalCase c;
  c.ground_truth = {cube(0, 0, 0)};
  const FrocCurve curve = froc(std::vector<EvalCase>{c}, 0.1);
  for (double b : standard_fp_budgets()) EXPECT_EQ(sensitivity_at(curve, b), 0.0);
  EXPECT_EQ(mean_sensitivity(curve), 0.0);
}

// ---- oracle: brute-force enumeration of every confidence cutoff ----

struct Counts {
  int tp = 0, fp = 0;
};

// Independent greedy matcher over a cutoff-filtered list.
Counts oracle_counts(const EvalCase& c, double cutoff, double iou_min) {
  std::vector<Detection> kept;
  for (const auto& d : c.detections) {
    if (d.confidence() >= cutoff) kept.push_back(d);
  }
  std::sort(kept.begin(), kept.end(), [](const Detection& a, const Detection& b) { return ranks_before(a, b); });
  std::vector<bool> used(c.ground_truth.size(), false);
  Counts out;
  for (const auto& d : kept) {
    int best = -1;
    double best_iou = -1;
    for (std::size_t g = 0; g < c.ground_truth.size(); ++g) {
      if (used[g]) continue;
      const double v = iou(d.box(), c.ground_truth[g]);
      if (v > best_iou) {
        best_iou = v;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0 && best_iou >= iou_min) {
      used[best] = true;
      ++out.tp;
    } else {
      ++out.fp;
    }
  }
  return out;
}

double oracle_ap(const std::vector<EvalCase>& cases, double iou_min) {
  std::set<double, std::greater<>> cutoffs;
  int n_gt = 0;
  for (const auto& c : cases) {
    n_gt += static_cast<int>(c.ground_truth.size());
    for (const auto& d : c.detections) cutoffs.insert(d.confidence());
  }
  std::vector<std::pair<double, double>> pr;  // recall, precision
  for (double cut : cutoffs) {
    Counts total;
    for (const auto& c : cases) {
      const Counts k = oracle_counts(c, cut, iou_min);
      total.tp += k.tp;
      total.fp += k.fp;
    }
    pr.emplace_back(static_cast<double>(total.tp) / n_gt,
                    static_cast<double>(total.tp) / (total.tp + total.fp));
  }
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t k = 0; k < pr.size(); ++k) {
    double envelope = 0.0;
    for (std::size_t j = k; j < pr.size(); ++j) envelope = std::max(envelope, pr[j].second);
    ap += (pr[k].first - prev_recall) * envelope;
    prev_recall = pr[k].first;
  }
  return ap;
}

class RandomInstances : public ::testing::Test {
 protected:
  std::mt19937_64 gen{77};
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen); }
  Box3 box_near(double spread) {
    return Box3({uniform(0, spread), uniform(0, spread), uniform(0, spread)},
                {uniform(1, 3), uniform(1, 3), uniform(1, 3)});
  }
  // Confidences on a coarse grid so ties occur often.
  double grid_conf() { return uniform_int(0, 16) / 16.0; }
  std::vector<EvalCase> instance() {
    std::vector<EvalCase> cases(uniform_int(1, 3));
    int dets_left = uniform_int(0, 10), gts_left = uniform_int(1, 5);
    for (std::size_t i = 0; i < cases.size(); ++i) {
      const bool last = i + 1 == cases.size();
      const int g = last ? gts_left : uniform_int(0, gts_left);
      const int d = last ? dets_left : uniform_int(0, dets_left);
      gts_left -= g;
      dets_left -= d;
      for (int k = 0; k < g; ++k) cases[i].ground_truth.push_back(box_near(4));
      for (int k = 0; k < d; ++k) cases[i].detections.emplace_back(box_near(4), grid_conf());
    }
    return cases;
  }
};

TEST_F(RandomInstances, AveragePrecisionMatchesCutoffEnumeration) {
  for (int i = 0; i < 1000; ++i) {
    const auto cases = instance();
    for (double iou_min : {0.1, 0.25, 0.5}) {
      ASSERT_NEAR(average_precision(cases, iou_min), oracle_ap(cases, iou_min), 1e-12) << "instance " << i;
    }
  }
}

TEST_F(RandomInstances, FrocMatchesCutoffEnumeration) {
  for (int i = 0; i < 500; ++i) {
    const auto cases = instance();
    int n_gt = 0;
    std::set<double, std::greater<>> cutoffs;
    for (const auto& c : cases) {
      n_gt += static_cast<int>(c.ground_truth.size());
      for (const auto& d : c.detections) cutoffs.insert(d.confidence());
    }
    const FrocCurve curve = froc(cases, 0.1);
    ASSERT_EQ(curve.points.size(), cutoffs.size());
    std::size_t k = 0;
    for (double cut : cutoffs) {
      Counts total;
      for (const auto& c : cases) {
        const Counts x = oracle_counts(c, cut, 0.1);
        total.tp += x.tp;
        total.fp += x.fp;
      }
      EXPECT_EQ(curve.points[k].cutoff, cut);
      EXPECT_NEAR(curve.points[k].sensitivity, static_cast<double>(total.tp) / n_gt, 1e-15);
      EXPECT_NEAR(curve.points[k].fp_per_scan, static_cast<double>(total.fp) / cases.size(), 1e-15);
      if (k > 0) {
        EXPECT_GE(curve.points[k].sensitivity, curve.points[k - 1].sensitivity);
        EXPECT_GE(curve.points[k].fp_per_scan, curve.points[k - 1].fp_per_scan);
      }
      ++k;
    }
  }
}

TEST_F(RandomInstances, NmsInvariants) {
  for (int i = 0; i < 10000; ++i) {
    std::vector<Detection> dets;
    const int n = uniform_int(0, 12);
    for (int k = 0; k < n; ++k) dets.emplace_back(box_near(5), grid_conf());
    const double thr = uniform(0.05, 0.7);
    const auto kept = nms3d(dets, thr);

    // Subset of the input.
    for (const auto& k : kept) ASSERT_NE(std::find(dets.begin(), dets.end(), k), dets.end());
    // No surviving pair overlaps beyond the threshold.
    for (std::size_t a = 0; a < kept.size(); ++a) {
      for (std::size_t b = a + 1; b < kept.size(); ++b) ASSERT_LE(iou(kept[a].box(), kept[b].box()), thr);
    }
    // Idempotent.
    ASSERT_EQ(nms3d(kept, thr), kept);
    // Invariant to a strictly increasing confidence map (c -> c^2 is exact on the grid).
    std::vector<Detection> squared;
    for (const auto& d : dets) squared.emplace_back(d.box(), d.confidence() * d.confidence());
    const auto kept_sq = nms3d(squared, thr);
    ASSERT_EQ(kept_sq.size(), kept.size());
    for (std::size_t k = 0; k < kept.size(); ++k) ASSERT_EQ(kept_sq[k].box(), kept[k].box());
  }
}

TEST_F(RandomInstances, MatchingInvariants) {
  for (int i = 0; i < 10000; ++i) {
    std::vector<Detection> dets;
    std::vector<Box3> gts;
    const int n = uniform_int(0, 10), g = uniform_int(0, 6);
    for (int k = 0; k < n; ++k) dets.emplace_back(box_near(5), grid_conf());
    for (int k = 0; k < g; ++k) gts.push_back(box_near(5));
    const double thr = uniform(0.05, 0.7);
    const MatchResult m = match_greedy(dets, gts, thr);

    ASSERT_EQ(m.true_positives() + m.false_negatives(), g);
    ASSERT_EQ(m.true_positives() + m.false_positives(), n);
    ASSERT_LE(m.true_positives(), std::min(n, g));
    ASSERT_EQ(std::count(m.gt_matched.begin(), m.gt_matched.end(), true), m.true_positives());
    for (std::size_t k = 1; k < m.ranked.size(); ++k) ASSERT_FALSE(ranks_before(m.ranked[k], m.ranked[k - 1]));

    std::vector<Detection> squared;
    for (const auto& d : dets) squared.emplace_back(d.box(), d.confidence() * d.confidence());
    const MatchResult m2 = match_greedy(squared, gts, thr);
    ASSERT_EQ(m2.is_tp, m.is_tp);
    ASSERT_EQ(m2.gt_matched, m.gt_matched);
  }
}

}  // namespace
}  // namespace lsadapt
