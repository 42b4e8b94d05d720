#include "lsadapt/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lsadapt/config.hpp"
#include "lsadapt/rng.hpp"

namespace lsadapt {

namespace {

constexpr std::uint64_t kStreamSourceCohort = 11;
constexpr std::uint64_t kStreamTargetCohort = 12;
constexpr std::uint64_t kStreamAnchorInit = 13;
constexpr std::uint64_t kStreamInfer = 14;
constexpr std::uint64_t kStreamKMeans = 15;
constexpr std::uint64_t kStreamValidation = 16;
constexpr std::uint64_t kStreamTest = 17;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

std::vector<EvalCase> run_inference(const SimDetector& detector, const AnchorSet& anchors,
                                    std::span<const Subject> subjects, const SimWorld& world,
                                    std::uint64_t seed) {
  std::vector<EvalCase> cases;
  cases.reserve(subjects.size());
  for (const auto& s : subjects) {
    cases.push_back({infer(detector, s, anchors, world, seed), s.gt_boxes});
  }
  return cases;
}

}  // namespace

std::string_view to_string(PriorInput p) {
  return p == PriorInput::kCandidates ? "candidates" : "selected";
}

PriorInput parse_prior_input(std::string_view text) {
  if (text == "candidates") return PriorInput::kCandidates;
  if (text == "selected") return PriorInput::kSelected;
  throw std::invalid_argument("unknown prior input '" + std::string(text) + "'");
}

std::string ArmSpec::name() const {
  std::string n(to_string(mode));
  if (anchor_adaptation && mode != SelectionMode::kSourceOnly) n += "+anchor";
  return n;
}

ArmSpec ArmSpec::parse(std::string_view text) {
  ArmSpec a;
  constexpr std::string_view suffix = "+anchor";
  a.anchor_adaptation = text.size() > suffix.size() && text.ends_with(suffix);
  if (a.anchor_adaptation) text.remove_suffix(suffix.size());
  a.mode = parse_selection_mode(text);
  if (a.mode == SelectionMode::kSourceOnly) a.anchor_adaptation = false;
  return a;
}

std::vector<ArmSpec> default_arms() {
  return {{SelectionMode::kSourceOnly, false},
          {SelectionMode::kTopP, false},
          {SelectionMode::kTopP, true},
          {SelectionMode::kPriorGuided, true}};
}

void LoopConfig::validate() const {
  require(rounds >= 1, "rounds: must be >= 1");
  require(lambda_start > 0.0 && lambda_start <= lambda_end && lambda_end <= 1.0,
          "lambda_start/lambda_end: need 0 < lambda_start <= lambda_end <= 1");
  ema.validate();
  require(tau >= 0.0 && tau <= 1.0, "tau: must lie in [0, 1]");
  require(nms_iou >= 0.0 && nms_iou <= 1.0, "nms_iou: must lie in [0, 1]");
  require(top_p > 0.0 && top_p <= 1.0, "top_p: must lie in (0, 1]");
  require(fixed_threshold >= 0.0 && fixed_threshold <= 1.0, "fixed_threshold: must lie in [0, 1]");
  require(num_anchors >= 1, "num_anchors: must be >= 1");
  require(train_rate >= 0.0 && train_rate <= 1.0, "train_rate: must lie in [0, 1]");
}

double lambda_at(int round, const LoopConfig& cfg) {
  if (round < 1 || round > cfg.rounds) {
    throw std::out_of_range("round " + std::to_string(round) + " outside [1, " +
                            std::to_string(cfg.rounds) + "]");
  }
  if (cfg.rounds == 1) return cfg.lambda_start;
  if (round == cfg.rounds) return cfg.lambda_end;
  const double t = static_cast<double>(round - 1) / static_cast<double>(cfg.rounds - 1);
  return cfg.lambda_start + (cfg.lambda_end - cfg.lambda_start) * t;
}

EvalSnapshot evaluate(std::span<const EvalCase> cases) {
  EvalSnapshot snap;
  for (std::size_t i = 0; i < EvalSnapshot::kIouThresholds.size(); ++i) {
    snap.ap[i] = average_precision(cases, EvalSnapshot::kIouThresholds[i]);
  }
  const FrocCurve curve = froc(cases, 0.1);
  for (double b : standard_fp_budgets()) snap.sensitivity.push_back(sensitivity_at(curve, b));
  snap.mean_sensitivity = mean_sensitivity(curve);
  return snap;
}

void ExperimentConfig::validate() const {
  loop.validate();
  detector.validate();
  world.validate();
  require(!arms.empty(), "arms: at least one arm is required");
  require(source_subjects >= 1, "source_subjects: must be >= 1");
  require(target_subjects >= 3, "target_subjects: must be >= 3");
  require(target_train_fraction > 0.0 && target_val_fraction > 0.0 &&
              target_train_fraction + target_val_fraction < 1.0,
          "target split fractions: need train > 0, val > 0, train + val < 1");
  (void)preset_by_name(source_preset, 1, 0);
  (void)preset_by_name(target_preset, 1, 0);
}

Cohorts make_cohorts(const ExperimentConfig& cfg) {
  CohortSpec src = preset_by_name(cfg.source_preset, cfg.source_subjects,
                                  derive_seed(cfg.seed, {kStreamSourceCohort}));
  src.domain = Domain::kSource;
  src.world = cfg.world;
  CohortSpec tgt = preset_by_name(cfg.target_preset, cfg.target_subjects,
                                  derive_seed(cfg.seed, {kStreamTargetCohort}));
  tgt.domain = Domain::kTarget;
  tgt.world = cfg.world;

  Cohorts c;
  c.source = generate_cohort(src);
  auto target = generate_cohort(tgt);
  const auto n = static_cast<double>(target.size());
  const auto n_train = static_cast<std::size_t>(std::lround(cfg.target_train_fraction * n));
  const auto n_val = static_cast<std::size_t>(std::lround(cfg.target_val_fraction * n));
  require(n_train >= 1 && n_val >= 1 && n_train + n_val < target.size(),
          "target_subjects: too few subjects for a train/validation/test split");
  c.target_train.assign(target.begin(), target.begin() + n_train);
  c.target_val.assign(target.begin() + n_train, target.begin() + n_train + n_val);
  c.target_test.assign(target.begin() + n_train + n_val, target.end());
  return c;
}

InitialState initialize(const ExperimentConfig& cfg, const Cohorts& cohorts) {
  std::vector<Box3> boxes;
  std::size_t n_lesions = 0;
  for (const auto& s : cohorts.source) {
    boxes.insert(boxes.end(), s.gt_boxes.begin(), s.gt_boxes.end());
    n_lesions += s.gt_boxes.size();
  }
  AnchorSet anchors(
      kmeans_shapes(boxes, cfg.loop.num_anchors, derive_seed(cfg.seed, {kStreamAnchorInit})));
  const SimDetector untrained = SimDetector::untrained(cfg.detector, cfg.world.bins.num_bins());
  SimDetector detector = source_pretrain(untrained, cohorts.source, anchors, cfg.world);
  PriorState priors(static_cast<double>(n_lesions) / static_cast<double>(cohorts.source.size()),
                    cohort_histogram(cohorts.source, cfg.world));
  return {std::move(detector), std::move(priors), std::move(anchors)};
}

std::uint64_t round_seed(std::uint64_t seed, int round) {
  return derive_seed(seed, {kStreamInfer, static_cast<std::uint64_t>(round)});
}

std::uint64_t test_seed(std::uint64_t seed) { return derive_seed(seed, {kStreamTest}); }

std::pair<ArmState, RoundRecord> run_round(const ArmState& state, const Cohorts& cohorts,
                                           const ExperimentConfig& cfg, int round) {
  const LoopConfig& loop = cfg.loop;
  const SimWorld& world = cfg.world;
  if (state.priors.round() != round - 1 || state.anchors.round() != round - 1) {
    throw std::logic_error("round " + std::to_string(round) +
                           " needs priors and anchors from round " + std::to_string(round - 1));
  }
  const double lambda = lambda_at(round, loop);

  ArmState next = state;
  RoundRecord rec;
  rec.arm = state.arm.name();
  rec.round = round;
  rec.lambda = lambda;
  const int n_bins = world.bins.num_bins();
  rec.quota.assign(n_bins, 0);
  rec.selected_per_bin.assign(n_bins, 0);
  rec.selected_hist.assign(n_bins, 0.0);

  // Step 1: supervised epoch on labeled source data.
  next.detector = train_update(next.detector, Domain::kSource,
                               labels_from_ground_truth(cohorts.source), cohorts.source,
                               state.anchors, world, loop.train_rate);

  PriorState priors(state.priors.mu(), {state.priors.hist().begin(), state.priors.hist().end()},
                    round);
  AnchorSet anchors(std::vector<Shape3>(state.anchors.shapes().begin(), state.anchors.shapes().end()),
                    round);

  if (state.arm.mode != SelectionMode::kSourceOnly && !cohorts.target_train.empty()) {
    // Step 2: inference on the unlabeled target split with S^(r-1).
    const std::uint64_t seed = round_seed(cfg.seed, round);
    std::vector<CandidateSet> candidates;
    candidates.reserve(cohorts.target_train.size());
    for (const auto& s : cohorts.target_train) {
      candidates.push_back({s.id, candidate_set(infer(next.detector, s, state.anchors, world, seed),
                                                loop.tau, loop.nms_iou)});
      rec.candidates += static_cast<int>(candidates.back().detections.size());
    }

    rec.n_allow = budget(state.priors.mu(), lambda);
    const Quota quota = allocate_quota(state.priors.hist(), rec.n_allow);
    rec.quota = quota.per_bin;

    PseudoLabelSet labels;
    switch (state.arm.mode) {
      case SelectionMode::kPriorGuided:
        labels = select_prior_guided(candidates, quota, world.bins, world.spacing);
        break;
      case SelectionMode::kTopP:
        labels = select_top_p(candidates, loop.top_p);
        break;
      case SelectionMode::kFixedThreshold:
        labels = select_fixed_threshold(candidates, loop.fixed_threshold);
        break;
      case SelectionMode::kSourceOnly:
        break;
    }
    labels.round = round;
    const std::vector<Box3> selected = labels.all_boxes();
    rec.selected = static_cast<int>(selected.size());
    for (const auto& b : selected) ++rec.selected_per_bin[bin_of(b, world.spacing, world.bins) - 1];
    rec.selected_hist = volume_histogram(selected, world.spacing, world.bins);

    std::vector<int> counts;
    std::vector<Box3> prior_boxes;
    if (loop.prior_input == PriorInput::kCandidates) {
      for (const auto& c : candidates) {
        counts.push_back(static_cast<int>(c.detections.size()));
        for (const auto& d : c.detections) prior_boxes.push_back(d.box());
      }
    } else {
      for (const auto& e : labels.subjects) counts.push_back(static_cast<int>(e.boxes.size()));
      prior_boxes = selected;
    }
    priors = PriorState(update_mu(state.priors, counts, loop.ema.alpha_mu),
                        update_hist(state.priors, prior_boxes, world.bins, world.spacing,
                                    loop.ema.alpha_h),
                        round);

    if (state.arm.anchor_adaptation && static_cast<int>(selected.size()) >= loop.num_anchors) {
      const auto centroids =
          kmeans_shapes(selected, loop.num_anchors,
                        derive_seed(cfg.seed, {kStreamKMeans, static_cast<std::uint64_t>(round)}));
      anchors = ema_update_anchors(state.anchors, centroids, loop.ema.beta);
    }

    next.detector = train_update(next.detector, Domain::kTarget, labels, cohorts.target_train,
                                 anchors, world, loop.train_rate);
  }

  next.priors = priors;
  next.anchors = anchors;
  rec.mu = priors.mu();
  rec.hist.assign(priors.hist().begin(), priors.hist().end());
  rec.anchors.assign(anchors.shapes().begin(), anchors.shapes().end());

  if (!cohorts.target_val.empty()) {
    const auto cases = run_inference(
        next.detector, next.anchors, cohorts.target_val, world,
        derive_seed(cfg.seed, {kStreamValidation, static_cast<std::uint64_t>(round)}));
    rec.validation = evaluate(cases);
  }
  return {std::move(next), std::move(rec)};
}

TestRecord evaluate_test(const ArmState& state, const Cohorts& cohorts,
                         const ExperimentConfig& cfg) {
  const auto cases = run_inference(state.detector, state.anchors, cohorts.target_test, cfg.world,
                                   test_seed(cfg.seed));
  TestRecord t;
  t.arm = state.arm.name();
  t.metrics = evaluate(cases);
  t.froc = froc(cases, 0.1);
  t.pr = precision_recall_curve(cases, 0.1);
  t.anchors.assign(state.anchors.shapes().begin(), state.anchors.shapes().end());
  return t;
}

Experiment::Experiment(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  cohorts_ = make_cohorts(cfg_);
  const InitialState init = initialize(cfg_, cohorts_);
  for (const auto& arm : cfg_.arms) {
    arms_.push_back({arm, init.detector, init.priors, init.anchors});
  }
}

Experiment::Experiment(ExperimentConfig cfg, Checkpoint checkpoint) : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (checkpoint.config_digest != config_digest(cfg_)) {
    throw std::invalid_argument("checkpoint was written for a different config (digest " +
                                checkpoint.config_digest + ", config " + config_digest(cfg_) + ")");
  }
  if (checkpoint.arms.size() != cfg_.arms.size()) {
    throw std::invalid_argument("checkpoint arm count does not match the config");
  }
  for (std::size_t i = 0; i < cfg_.arms.size(); ++i) {
    if (!(checkpoint.arms[i].arm == cfg_.arms[i])) {
      throw std::invalid_argument("checkpoint arm " + checkpoint.arms[i].arm.name() +
                                  " does not match config arm " + cfg_.arms[i].name());
    }
  }
  cohorts_ = make_cohorts(cfg_);
  arms_ = std::move(checkpoint.arms);
  for (auto& a : arms_) {
    a.detector.params = cfg_.detector;
    a.detector.validate();
  }
  next_round_ = checkpoint.next_round;
}

std::vector<RoundRecord> Experiment::step() {
  if (finished()) throw std::logic_error("experiment already finished");
  std::vector<RoundRecord> records;
  for (auto& arm : arms_) {
    auto [state, rec] = run_round(arm, cohorts_, cfg_, next_round_);
    arm = std::move(state);
    records.push_back(std::move(rec));
  }
  ++next_round_;
  return records;
}

std::vector<TestRecord> Experiment::evaluate_test() const {
  std::vector<TestRecord> out;
  for (const auto& arm : arms_) out.push_back(lsadapt::evaluate_test(arm, cohorts_, cfg_));
  return out;
}

Checkpoint Experiment::checkpoint() const {
  return {config_digest(cfg_), cfg_.seed, next_round_, arms_};
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  Experiment exp(cfg);
  ExperimentResult result;
  while (!exp.finished()) {
    auto recs = exp.step();
    result.log.insert(result.log.end(), recs.begin(), recs.end());
  }
  result.test = exp.evaluate_test();
  result.final_states.assign(exp.arms().begin(), exp.arms().end());
  result.cohorts = exp.cohorts();
  return result;
}

}  // namespace lsadapt
