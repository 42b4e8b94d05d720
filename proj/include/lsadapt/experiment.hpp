#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lsadapt/anchors.hpp"
#include "lsadapt/matching.hpp"
#include "lsadapt/priors.hpp"
#include "lsadapt/selection.hpp"
#include "lsadapt/simulation.hpp"

namespace lsadapt {

/// Which detections feed the mu / histogram estimates.
enum class PriorInput {
  kCandidates,  // the tau + NMS candidate sets C_i
  kSelected,    // the final budget-limited pseudo labels
};

std::string_view to_string(PriorInput p);
PriorInput parse_prior_input(std::string_view text);

/// One experimental arm: a selection rule plus whether anchors adapt.
struct ArmSpec {
  SelectionMode mode = SelectionMode::kPriorGuided;
  bool anchor_adaptation = true;

  /// "top_p", "top_p+anchor", "prior_guided+anchor", ...
  std::string name() const;
  static ArmSpec parse(std::string_view text);

  friend bool operator==(const ArmSpec&, const ArmSpec&) = default;
};

std::vector<ArmSpec> default_arms();

struct LoopConfig {
  int rounds = 200;
  double lambda_start = 0.1;
  double lambda_end = 0.8;
  EmaConfig ema;
  double tau = 0.5;
  double nms_iou = 0.25;
  double top_p = 0.5;
  double fixed_threshold = 0.8;
  int num_anchors = 3;
  /// Step size of one simulated training epoch.
  double train_rate = 0.05;
  PriorInput prior_input = PriorInput::kCandidates;

  void validate() const;
};

/// Linear selection-factor ramp: lambda_start at r = 1, lambda_end at r = R.
double lambda_at(int round, const LoopConfig& cfg);

/// Evaluation summary of one model state on a labeled split.
struct EvalSnapshot {
  static constexpr std::array<double, 3> kIouThresholds{0.1, 0.25, 0.5};
  std::array<double, 3> ap{};
  /// Sensitivity at each of `standard_fp_budgets()`, FROC at IoU 0.1.
  std::vector<double> sensitivity;
  double mean_sensitivity = 0.0;
};

EvalSnapshot evaluate(std::span<const EvalCase> cases);

/// Model state carried from round to round for one arm.
struct ArmState {
  ArmSpec arm;
  SimDetector detector;
  PriorState priors;
  AnchorSet anchors;
};

struct RoundRecord {
  std::string arm;
  int round = 0;
  double lambda = 0.0;
  double mu = 0.0;
  std::vector<double> hist;
  std::vector<Shape3> anchors;
  int n_allow = 0;
  std::vector<int> quota;
  std::vector<int> selected_per_bin;
  int candidates = 0;
  int selected = 0;
  /// Histogram of the selected pseudo labels (zeros when none).
  std::vector<double> selected_hist;
  EvalSnapshot validation;
};

struct TestRecord {
  std::string arm;
  EvalSnapshot metrics;
  FrocCurve froc;
  std::vector<PrPoint> pr;  // at IoU 0.1
  std::vector<Shape3> anchors;
};

struct Cohorts {
  std::vector<Subject> source;
  std::vector<Subject> target_train;
  std::vector<Subject> target_val;
  std::vector<Subject> target_test;
};

/// Everything needed to reproduce a run.
struct ExperimentConfig {
  std::uint64_t seed = 7;
  LoopConfig loop;
  DetectorParams detector;
  SimWorld world;
  std::vector<ArmSpec> arms = default_arms();
  std::string source_preset = "fdg";
  std::string target_preset = "psma";
  int source_subjects = 200;
  int target_subjects = 120;
  /// Train / validation fractions of the target cohort; the rest is test.
  double target_train_fraction = 0.7;
  double target_val_fraction = 0.1;

  void validate() const;
};

/// Generates both cohorts and splits the target cohort.
Cohorts make_cohorts(const ExperimentConfig& cfg);

/// Source-derived starting point: anchors from k-means on source boxes,
/// pretrained detector, mu^(0) and h^(0) from the source cohort.
struct InitialState {
  SimDetector detector;
  PriorState priors;
  AnchorSet anchors;
};
InitialState initialize(const ExperimentConfig& cfg, const Cohorts& cohorts);

/// Seed for the simulated inference of one round.
std::uint64_t round_seed(std::uint64_t seed, int round);

/// One alternating round: source epoch, then (unless source-only) target
/// inference, budget and quota from the previous priors, selection, prior and
/// anchor updates, and a pseudo-label epoch. Evaluates on the validation split.
std::pair<ArmState, RoundRecord> run_round(const ArmState& state, const Cohorts& cohorts,
                                           const ExperimentConfig& cfg, int round);

/// Seed for the final test-split inference.
std::uint64_t test_seed(std::uint64_t seed);

/// Evaluation of a final state on the test split.
TestRecord evaluate_test(const ArmState& state, const Cohorts& cohorts,
                         const ExperimentConfig& cfg);

/// Arm states plus the next round to run.
struct Checkpoint {
  std::string config_digest;
  std::uint64_t seed = 0;
  int next_round = 1;
  std::vector<ArmState> arms;
};

/// Stepwise driver; rounds run for every arm in lockstep.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg);
  /// Continues from a checkpoint taken with the same config.
  Experiment(ExperimentConfig cfg, Checkpoint checkpoint);

  const ExperimentConfig& config() const { return cfg_; }
  const Cohorts& cohorts() const { return cohorts_; }
  std::span<const ArmState> arms() const { return arms_; }
  int next_round() const { return next_round_; }
  bool finished() const { return next_round_ > cfg_.loop.rounds; }

  /// Runs the next round for all arms; one record per arm.
  std::vector<RoundRecord> step();
  std::vector<TestRecord> evaluate_test() const;
  Checkpoint checkpoint() const;

 private:
  ExperimentConfig cfg_;
  Cohorts cohorts_;
  std::vector<ArmState> arms_;
  int next_round_ = 1;
};

struct ExperimentResult {
  std::vector<ArmState> final_states;
  std::vector<RoundRecord> log;
  std::vector<TestRecord> test;
  Cohorts cohorts;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

}  // namespace lsadapt
