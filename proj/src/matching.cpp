#include "lsadapt/matching.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace lsadapt {

Detection::Detection(Box3 box, double confidence) : box_(box), confidence_(confidence) {
  if (!(confidence >= 0.0 && confidence <= 1.0)) {
    throw std::invalid_argument("detection confidence must lie in [0, 1]");
  }
}

bool ranks_before(const Detection& a, const Detection& b) {
  if (a.confidence() != b.confidence()) return a.confidence() > b.confidence();
  const double va = a.box().voxels();
  const double vb = b.box().voxels();
  if (va != vb) return va > vb;
  return a.box().coords() < b.box().coords();
}

void sort_by_rank(std::vector<Detection>& dets) {
  std::stable_sort(dets.begin(), dets.end(), ranks_before);
}

std::vector<Detection> nms3d(std::vector<Detection> dets, double iou_threshold) {
  sort_by_rank(dets);
  std::vector<Detection> kept;
  kept.reserve(dets.size());
  for (const auto& d : dets) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return iou(k.box(), d.box()) > iou_threshold;
    });
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

int MatchResult::true_positives() const {
  return static_cast<int>(std::count(is_tp.begin(), is_tp.end(), true));
}

int MatchResult::false_positives() const {
  return static_cast<int>(is_tp.size()) - true_positives();
}

int MatchResult::false_negatives() const {
  return static_cast<int>(std::count(gt_matched.begin(), gt_matched.end(), false));
}

MatchResult match_greedy(std::vector<Detection> dets, std::span<const Box3> gts, double iou_min) {
  sort_by_rank(dets);
  MatchResult out;
  out.is_tp.assign(dets.size(), false);
  out.gt_matched.assign(gts.size(), false);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    double best = -1.0;
    std::size_t best_j = gts.size();
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (out.gt_matched[j]) continue;
      const double v = iou(dets[i].box(), gts[j]);
      if (v > best) {
        best = v;
        best_j = j;
      }
    }
    if (best_j < gts.size() && best >= iou_min) {
      out.is_tp[i] = true;
      out.gt_matched[best_j] = true;
    }
  }
  out.ranked = std::move(dets);
  return out;
}

namespace {

struct Labeled {
  const Detection* det;
  bool tp;
};

/// Matches each case separately, then pools the labels in global rank order.
std::vector<Labeled> pooled_labels(std::span<const EvalCase> cohort, double iou_min,
                                   std::vector<MatchResult>& storage) {
  storage.clear();
  storage.reserve(cohort.size());
  std::vector<Labeled> pooled;
  for (const auto& c : cohort) {
    storage.push_back(match_greedy(c.detections, c.ground_truth, iou_min));
  }
  for (const auto& m : storage) {
    for (std::size_t i = 0; i < m.ranked.size(); ++i) pooled.push_back({&m.ranked[i], m.is_tp[i]});
  }
  std::stable_sort(pooled.begin(), pooled.end(), [](const Labeled& a, const Labeled& b) {
    return ranks_before(*a.det, *b.det);
  });
  return pooled;
}

std::size_t total_gt(std::span<const EvalCase> cohort) {
  return std::accumulate(cohort.begin(), cohort.end(), std::size_t{0},
                         [](std::size_t acc, const EvalCase& c) { return acc + c.ground_truth.size(); });
}

/// Cumulative (tp, fp) after each distinct confidence value.
struct Tally {
  double cutoff;
  std::size_t tp;
  std::size_t fp;
};

std::vector<Tally> sweep(std::span<const EvalCase> cohort, double iou_min) {
  std::vector<MatchResult> storage;
  const auto pooled = pooled_labels(cohort, iou_min, storage);
  std::vector<Tally> out;
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    (pooled[i].tp ? tp : fp) += 1;
    const bool group_end =
        i + 1 == pooled.size() || pooled[i + 1].det->confidence() != pooled[i].det->confidence();
    if (group_end) out.push_back({pooled[i].det->confidence(), tp, fp});
  }
  return out;
}

}  // namespace

std::vector<PrPoint> precision_recall_curve(std::span<const EvalCase> cohort, double iou_min) {
  const std::size_t n_gt = total_gt(cohort);
  if (n_gt == 0) throw std::invalid_argument("precision/recall undefined without ground truth");
  std::vector<PrPoint> out;
  for (const auto& t : sweep(cohort, iou_min)) {
    out.push_back({t.cutoff, static_cast<double>(t.tp) / static_cast<double>(n_gt),
                   static_cast<double>(t.tp) / static_cast<double>(t.tp + t.fp)});
  }
  return out;
}

double average_precision(std::span<const EvalCase> cohort, double iou_min) {
  const auto curve = precision_recall_curve(cohort, iou_min);
  // Envelope: best precision at this or any later (higher-recall) point.
  std::vector<double> envelope(curve.size());
  double running = 0.0;
  for (std::size_t i = curve.size(); i-- > 0;) {
    running = std::max(running, curve[i].precision);
    envelope[i] = running;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    ap += (curve[i].recall - prev_recall) * envelope[i];
    prev_recall = curve[i].recall;
  }
  return ap;
}

FrocCurve froc(std::span<const EvalCase> cohort, double iou_min) {
  if (cohort.empty()) throw std::invalid_argument("FROC needs at least one scan");
  const std::size_t n_gt = total_gt(cohort);
  if (n_gt == 0) throw std::invalid_argument("FROC sensitivity undefined without ground truth");
  FrocCurve curve;
  const double scans = static_cast<double>(cohort.size());
  for (const auto& t : sweep(cohort, iou_min)) {
    curve.points.push_back({t.cutoff, static_cast<double>(t.fp) / scans,
                            static_cast<double>(t.tp) / static_cast<double>(n_gt)});
  }
  return curve;
}

double sensitivity_at(const FrocCurve& curve, double fp_per_scan) {
  double best = 0.0;
  for (const auto& p : curve.points) {
    if (p.fp_per_scan <= fp_per_scan) best = std::max(best, p.sensitivity);
  }
  return best;
}

std::span<const double> standard_fp_budgets() {
  static constexpr std::array<double, 7> budgets{0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
  return budgets;
}

double mean_sensitivity(const FrocCurve& curve) {
  const auto budgets = standard_fp_budgets();
  double sum = 0.0;
  for (double b : budgets) sum += sensitivity_at(curve, b);
  return sum / static_cast<double>(budgets.size());
}

}  // namespace lsadapt
