#pragma once

#include <span>
#include <vector>

#include "lsadapt/geometry.hpp"

namespace lsadapt {

/// A scored box emitted by a detector.
class Detection {
 public:
  Detection(Box3 box, double confidence);

  const Box3& box() const { return box_; }
  double confidence() const { return confidence_; }

  friend bool operator==(const Detection&, const Detection&) = default;

 private:
  Box3 box_;
  double confidence_;
};

/// Deterministic processing order: higher confidence first, then larger
/// volume, then lexicographically smaller coordinates.
bool ranks_before(const Detection& a, const Detection& b);

void sort_by_rank(std::vector<Detection>& dets);

/// Greedy 3D NMS. A detection survives iff its IoU with every previously kept
/// detection is <= iou_threshold. Output is in rank order.
std::vector<Detection> nms3d(std::vector<Detection> dets, double iou_threshold);

struct MatchResult {
  /// Per detection in rank order: true for TP.
  std::vector<bool> is_tp;
  /// The detections in the order the labels refer to.
  std::vector<Detection> ranked;
  /// Per ground-truth box: matched flag.
  std::vector<bool> gt_matched;

  int true_positives() const;
  int false_positives() const;
  int false_negatives() const;
};

/// One-to-one greedy matching. Detections are processed in rank order; each
/// takes the unmatched ground truth with the highest IoU if that IoU >= iou_min.
MatchResult match_greedy(std::vector<Detection> dets, std::span<const Box3> gts, double iou_min);

/// Detections and ground truth of one scan.
struct EvalCase {
  std::vector<Detection> detections;
  std::vector<Box3> ground_truth;
};

struct PrPoint {
  double cutoff = 0.0;
  double recall = 0.0;
  double precision = 0.0;
};

/// Pooled precision/recall operating points, one per distinct confidence
/// value, ordered by descending cutoff. Throws if the cohort has no ground truth.
std::vector<PrPoint> precision_recall_curve(std::span<const EvalCase> cohort, double iou_min);

/// Area under the monotone precision envelope of the pooled PR curve
/// (all-points interpolation). Throws if the cohort has no ground truth.
double average_precision(std::span<const EvalCase> cohort, double iou_min);

struct FrocPoint {
  double cutoff = 0.0;
  double fp_per_scan = 0.0;
  double sensitivity = 0.0;
};

struct FrocCurve {
  std::vector<FrocPoint> points;
};

/// FROC sweep over distinct confidence cutoffs, high to low.
FrocCurve froc(std::span<const EvalCase> cohort, double iou_min = 0.1);

/// Best sensitivity among points with fp_per_scan <= budget, or 0.
double sensitivity_at(const FrocCurve& curve, double fp_per_scan);

/// FP/scan budgets reported by the evaluation tools.
std::span<const double> standard_fp_budgets();

/// Mean sensitivity over `standard_fp_budgets()`.
double mean_sensitivity(const FrocCurve& curve);

}  // namespace lsadapt
