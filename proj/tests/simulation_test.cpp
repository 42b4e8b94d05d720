#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lsadapt/anchors.hpp"
#include "lsadapt/priors.hpp"
#include "lsadapt/simulation.hpp"

namespace lsadapt {
namespace {

const SimWorld kWorld;

Subject one_lesion_subject(const Box3& box) { return {"tgt-0000", Domain::kTarget, {box}}; }

SimDetector flat_detector(double recall, double fp_rate) {
  SimDetector d = SimDetector::untrained(DetectorParams{}, kWorld.bins.num_bins());
  for (DomainSkill* s : {&d.source, &d.target}) {
    std::fill(s->recall.begin(), s->recall.end(), recall);
    s->fp_rate = fp_rate;
  }
  return d;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto i, auto j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t k = 0; k < idx.size();) {
      std::size_t e = k;
      while (e + 1 < idx.size() && v[idx[e + 1]] == v[idx[k]]) ++e;
      for (std::size_t t = k; t <= e; ++t) r[idx[t]] = 0.5 * (k + e);
      k = e + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / ra.size();
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / rb.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

TEST(CohortSpec, Validation) {
  CohortSpec s = psma_like_preset(10, 1);
  EXPECT_NO_THROW(s.validate());
  s.size_hist[3] += 0.2;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = psma_like_preset(10, 1);
  s.size_hist[0] = 0.1;  // bin 1 lies wholly below the minimum lesion volume
  s.size_hist[1] -= 0.1;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = psma_like_preset(10, 1);
  s.n_subjects = -1;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(GenerateCohort, ZeroMeanGivesEmptySubjects) {
  CohortSpec s = fdg_like_preset(20, 3);
  s.mean_lesions = 0.0;
  s.dispersion = 0.0;
  for (const auto& subj : generate_cohort(s)) EXPECT_TRUE(subj.gt_boxes.empty());
}

TEST(GenerateCohort, SameSeedSameCohort) {
  EXPECT_EQ(generate_cohort(psma_like_preset(30, 5)), generate_cohort(psma_like_preset(30, 5)));
  EXPECT_NE(generate_cohort(psma_like_preset(30, 5)), generate_cohort(psma_like_preset(30, 6)));
}

TEST(GenerateCohort, HistogramMatchesSpec) {
  for (const auto& spec : {fdg_like_preset(700, 8), psma_like_preset(300, 8)}) {
    const auto cohort = generate_cohort(spec);
    std::size_t lesions = 0;
    for (const auto& s : cohort) lesions += s.gt_boxes.size();
    ASSERT_GE(lesions, 2000u);
    EXPECT_LE(total_variation(cohort_histogram(cohort, spec.world), spec.size_hist), 0.05);
  }
}

TEST(GenerateCohort, LesionsValidInBoundsAndSeparated) {
  const CohortSpec spec = psma_like_preset(60, 2);
  for (const auto& s : generate_cohort(spec)) {
    EXPECT_EQ(s.domain, Domain::kTarget);
    for (std::size_t i = 0; i < s.gt_boxes.size(); ++i) {
      const Box3& b = s.gt_boxes[i];
      EXPECT_GE(volume_cc(b, spec.world.spacing), spec.world.min_volume_cc * (1 - 1e-12));
      const Vec3 lo = b.min_corner(), hi = b.max_corner();
      for (int a = 0; a < 3; ++a) {
        EXPECT_GE(lo[a], 0.0);
        EXPECT_LE(hi[a], spec.world.field[a]);
      }
      for (std::size_t j = i + 1; j < s.gt_boxes.size(); ++j) EXPECT_LE(iou(b, s.gt_boxes[j]), 0.1);
    }
  }
}

TEST(Presets, TargetHasMoreSmallLesions) {
  const CohortSpec fdg = fdg_like_preset(10, 0), psma = psma_like_preset(10, 0);
  EXPECT_GT(psma.mean_lesions, fdg.mean_lesions);
  const double fdg_small = fdg.size_hist[1] + fdg.size_hist[2] + fdg.size_hist[3];
  const double psma_small = psma.size_hist[1] + psma.size_hist[2] + psma.size_hist[3];
  EXPECT_GT(psma_small, fdg_small);
  EXPECT_THROW(preset_by_name("ct", 1, 0), std::invalid_argument);
}

TEST(Infer, NoiselessLimit) {
  const Box3 lesion({10, 20, 30}, {3, 4, 5});
  const AnchorSet anchors({shape_of(lesion)});
  const auto dets = infer(flat_detector(1.0, 0.0), one_lesion_subject(lesion), anchors, kWorld, 1);
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_EQ(dets[0].box(), lesion);
}

TEST(Infer, ZeroRecallOnlyFalsePositives) {
  const Box3 lesion({10, 20, 30}, {3, 4, 5});
  const AnchorSet anchors({{3, 3, 3}});
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    for (const auto& d : infer(flat_detector(0.0, 2.0), one_lesion_subject(lesion), anchors, kWorld, seed)) {
      EXPECT_LT(iou(d.box(), lesion), 1.0);
    }
  }
  EXPECT_TRUE(infer(flat_detector(0.0, 0.0), one_lesion_subject(lesion), anchors, kWorld, 0).empty());
}

TEST(Infer, FalsePositiveCountMatchesPoissonMean) {
  const double rate = 1.7;
  const SimDetector d = flat_detector(0.0, rate);
  const AnchorSet anchors({{3, 3, 3}});
  const int n = 1000;
  double total = 0;
  for (int i = 0; i < n; ++i) {
    const Subject s{"tgt-" + std::to_string(i), Domain::kTarget, {}};
    total += static_cast<double>(infer(d, s, anchors, kWorld, 17).size());
  }
  EXPECT_NEAR(total / n, rate, 3.0 * std::sqrt(rate / n));
}

TEST(Infer, Deterministic) {
  const auto cohort = generate_cohort(psma_like_preset(5, 1));
  const SimDetector d = flat_detector(0.7, 1.0);
  const AnchorSet anchors({{2, 2, 2}, {5, 5, 5}});
  for (const auto& s : cohort) EXPECT_EQ(infer(d, s, anchors, kWorld, 3), infer(d, s, anchors, kWorld, 3));
}

TEST(TrainUpdate, AllCorrectLabelsStepRecall) {
  const Box3 lesion({10, 20, 30}, {3, 4, 5});
  const Subject s = one_lesion_subject(lesion);
  const AnchorSet anchors({shape_of(lesion)});
  const int b = bin_of(lesion, kWorld.spacing, kWorld.bins) - 1;
  SimDetector d = flat_detector(0.4, 1.0);
  PseudoLabelSet labels;
  labels.subjects.push_back({s.id, {lesion}});
  const SimDetector out = train_update(d, Domain::kTarget, labels, std::vector<Subject>{s}, anchors, kWorld, 0.5);
  EXPECT_NEAR(out.target.recall[b], 0.7, 1e-12);
  EXPECT_EQ(out.source, d.source);
}

TEST(TrainUpdate, WrongLabelsChangeNothingButBelief) {
  const Box3 lesion({10, 20, 30}, {3, 4, 5});
  const Subject s = one_lesion_subject(lesion);
  const AnchorSet anchors({shape_of(lesion)});
  const SimDetector d = flat_detector(0.4, 1.0);
  PseudoLabelSet labels;
  labels.subjects.push_back({s.id, {Box3({80, 80, 80}, {3, 4, 5})}});
  const SimDetector out = train_update(d, Domain::kTarget, labels, std::vector<Subject>{s}, anchors, kWorld, 0.5);
  EXPECT_EQ(out.target.recall, d.target.recall);
  EXPECT_GE(out.target.fp_rate, d.target.fp_rate);
}

TEST(TrainUpdate, EmptyLabelsAreNoOp) {
  const SimDetector d = flat_detector(0.4, 1.0);
  const SimDetector out = train_update(d, Domain::kTarget, PseudoLabelSet{}, std::vector<Subject>{}, AnchorSet({{1, 1, 1}}),
                                       kWorld, 0.5);
  EXPECT_EQ(out.target, d.target);
  EXPECT_EQ(out.source, d.source);
}

TEST(TrainUpdate, UnknownSubjectThrows) {
  PseudoLabelSet labels;
  labels.subjects.push_back({"nobody", {Box3({0, 0, 0}, {1, 1, 1})}});
  EXPECT_THROW(train_update(flat_detector(0.4, 1.0), Domain::kTarget, labels, std::vector<Subject>{},
                            AnchorSet({{1, 1, 1}}), kWorld, 0.5),
               std::invalid_argument);
}

TEST(TrainUpdate, RatesStayValid) {
  const auto cohort = generate_cohort(psma_like_preset(20, 4));
  SimDetector d = flat_detector(0.3, 2.0);
  const AnchorSet anchors({{2, 2, 2}, {4, 4, 4}, {8, 8, 8}});
  for (int r = 0; r < 300; ++r) {
    PseudoLabelSet labels;
    for (const auto& s : cohort) {
      std::vector<Box3> boxes;
      for (const auto& det : infer(d, s, anchors, kWorld, r)) boxes.push_back(det.box());
      labels.subjects.push_back({s.id, boxes});
    }
    d = train_update(d, Domain::kTarget, labels, cohort, anchors, kWorld, 0.3);
    for (double v : d.target.recall) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
    ASSERT_GE(d.target.fp_rate, d.params.min_fp_rate);
    ASSERT_NEAR(std::accumulate(d.target.belief.begin(), d.target.belief.end(), 0.0), 1.0, 1e-9);
  }
}

class Pretrained : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    source_ = generate_cohort(fdg_like_preset(200, 21));
    std::vector<Box3> boxes;
    for (const auto& s : source_) boxes.insert(boxes.end(), s.gt_boxes.begin(), s.gt_boxes.end());
    anchors_ = new AnchorSet(kmeans_shapes(boxes, 3, 5));
    detector_ = source_pretrain(SimDetector::untrained(DetectorParams{}, kWorld.bins.num_bins()), source_,
                                *anchors_, kWorld);
  }
  static void TearDownTestSuite() { delete anchors_; }
  static inline std::vector<Subject> source_;
  static inline AnchorSet* anchors_ = nullptr;
  static inline SimDetector detector_;
};

TEST_F(Pretrained, BeliefIsSourceHistogram) {
  EXPECT_EQ(detector_.source.belief, cohort_histogram(source_, kWorld));
  EXPECT_EQ(detector_.target.belief, detector_.source.belief);
}

TEST_F(Pretrained, RecallFollowsSourcePrevalence) {
  const auto h = cohort_histogram(source_, kWorld);
  std::vector<double> prevalence, recall;
  for (std::size_t b = 0; b < h.size(); ++b) {
    if (h[b] == 0.0) continue;
    prevalence.push_back(h[b]);
    recall.push_back(detector_.source.recall[b]);
  }
  EXPECT_GT(spearman(prevalence, recall), 0.0);
}

TEST_F(Pretrained, TargetStartsWeakerThanSource) {
  for (std::size_t b = 0; b < detector_.source.recall.size(); ++b) {
    EXPECT_LE(detector_.target.recall[b], detector_.source.recall[b]);
  }
  EXPECT_GE(detector_.target.fp_rate, detector_.source.fp_rate);
}

TEST_F(Pretrained, NoShiftDetectsWell) {
  const auto fresh = generate_cohort(fdg_like_preset(100, 99));
  std::vector<EvalCase> cases;
  for (const auto& s : fresh) cases.push_back({infer(detector_, s, *anchors_, kWorld, 5), s.gt_boxes});
  EXPECT_GT(average_precision(cases, 0.1), 0.8);
}

}  // namespace
}  // namespace lsadapt
