#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lsadapt/anchors.hpp"
#include "lsadapt/geometry.hpp"
#include "lsadapt/matching.hpp"
#include "lsadapt/selection.hpp"

namespace lsadapt {

enum class Domain { kSource, kTarget };

std::string_view to_string(Domain d);
Domain parse_domain(std::string_view text);

/// One scan: identifier, domain and ground-truth lesion boxes.
struct Subject {
  std::string id;
  Domain domain = Domain::kSource;
  std::vector<Box3> gt_boxes;

  friend bool operator==(const Subject&, const Subject&) = default;
};

/// Geometry shared by cohort generation and the simulated detector.
struct SimWorld {
  Spacing spacing = default_spacing();
  BinningConfig bins = BinningConfig::default_bins();
  /// Field of view in voxels.
  Vec3 field{128.0, 128.0, 160.0};
  /// Smallest lesion kept in a cohort (cc).
  double min_volume_cc = 0.08;
  /// Upper volume of the open-ended last bin when sampling shapes (cc).
  double max_volume_cc = 450.0;
  /// Largest ratio between one box side and the geometric-mean side.
  double max_aspect = 1.6;

  void validate() const;
  /// Volume range [lo, hi) used to sample a box of the 1-based bin; lo may
  /// be raised to min_volume_cc when `clip_to_min` is set.
  std::pair<double, double> volume_range(int bin, bool clip_to_min) const;
};

struct CohortSpec {
  Domain domain = Domain::kSource;
  int n_subjects = 0;
  /// Mean lesions per subject.
  double mean_lesions = 0.0;
  /// Negative-binomial overdispersion: variance = mean + dispersion * mean^2.
  double dispersion = 0.0;
  /// Probability of each volume bin (length = number of bins).
  std::vector<double> size_hist;
  SimWorld world;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// Glucose-avid source preset: fewer lesions per scan, heavier large-volume tail.
CohortSpec fdg_like_preset(int n_subjects, std::uint64_t seed);
/// Target preset with more lesions per scan, concentrated in small volumes.
CohortSpec psma_like_preset(int n_subjects, std::uint64_t seed);
/// Returns the preset named "fdg" or "psma".
CohortSpec preset_by_name(std::string_view name, int n_subjects, std::uint64_t seed);

std::vector<Subject> generate_cohort(const CohortSpec& spec);

/// Histogram of all ground-truth boxes of a cohort.
std::vector<double> cohort_histogram(std::span<const Subject> cohort, const SimWorld& world);

/// Knobs of the simulated detector. All probabilities and rates in valid ranges.
struct DetectorParams {
  /// Floor of the anchor-fit multiplier on recall (the constant c).
  double recall_mixing = 0.3;
  /// Anchor coverage at which an anchor counts as a full positive match;
  /// fit = min(1, coverage / positive_iou). 1.0 uses raw coverage.
  double positive_iou = 0.5;
  /// Relative localization noise at zero coverage.
  double jitter_sigma = 0.15;
  double tp_conf_base = 0.62;
  double tp_conf_size_gain = 0.25;
  double tp_conf_skill_gain = 0.3;
  double tp_conf_fit_gain = 0.1;
  double tp_conf_sd = 0.12;
  double fp_conf_mean = 0.4;
  double fp_conf_sd = 0.14;
  double min_fp_rate = 0.25;
  /// Labels per subject in a bin needed for a full-size recall step.
  double support_per_subject = 0.5;
  /// Fraction of a bin's training step carried to each adjacent bin, compounding
  /// with distance.
  double size_transfer = 0.5;
  /// Recall before source pretraining.
  double initial_recall = 0.2;
  double initial_fp_rate = 3.0;
  double pretrain_rate = 0.03;
  int pretrain_iterations = 100;
  /// Target recall = transfer * source recall after pretraining.
  double target_transfer = 0.6;
  /// Target false-positive rate = factor * source rate after pretraining.
  double target_fp_factor = 3.0;

  void validate() const;
};

/// Per-domain state of the simulated detector.
struct DomainSkill {
  std::vector<double> recall;  // per volume bin
  double fp_rate = 0.0;        // false positives per scan
  std::vector<double> belief;  // size histogram used for false positives

  friend bool operator==(const DomainSkill&, const DomainSkill&) = default;
};

/// Transparent stand-in for a trained detector.
struct SimDetector {
  DetectorParams params;
  DomainSkill source;
  DomainSkill target;

  static SimDetector untrained(const DetectorParams& params, int num_bins);

  const DomainSkill& skill(Domain d) const { return d == Domain::kSource ? source : target; }
  DomainSkill& skill(Domain d) { return d == Domain::kSource ? source : target; }

  void validate() const;
};

/// Recall multiplier from anchor fit: c + (1 - c) * min(1, coverage / positive_iou).
double anchor_fit_factor(const DetectorParams& params, double coverage);

/// Simulated forward pass on one scan.
std::vector<Detection> infer(const SimDetector& detector, const Subject& subject,
                             const AnchorSet& anchors, const SimWorld& world, std::uint64_t seed);

/// Simulated epoch of supervised training of the domain's skill on labels.
/// Label correctness is judged against the subjects' ground truth at IoU 0.1.
SimDetector train_update(const SimDetector& detector, Domain domain,
                         const PseudoLabelSet& labels, std::span<const Subject> subjects,
                         const AnchorSet& anchors, const SimWorld& world, double rate);

/// Ground truth of `subjects` as a label set.
PseudoLabelSet labels_from_ground_truth(std::span<const Subject> subjects);

/// Trains on source ground truth for the configured iteration count, sets the
/// source belief to the source histogram, and derives the shifted target skill.
SimDetector source_pretrain(const SimDetector& detector, std::span<const Subject> source,
                            const AnchorSet& anchors, const SimWorld& world);

}  // namespace lsadapt
