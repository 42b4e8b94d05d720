#include "lsadapt/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include "lsadapt/priors.hpp"
#include "lsadapt/rng.hpp"

namespace lsadapt {

namespace {

constexpr std::uint64_t kStreamCount = 1;
constexpr std::uint64_t kStreamLesion = 2;
constexpr std::uint64_t kStreamFalsePositive = 3;
constexpr int kPlacementRetries = 500;
constexpr double kGtOverlapCap = 0.1;
constexpr double kLabelMatchIou = 0.1;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

/// Box extent for a volume in cc with bounded random aspect ratio.
Vec3 sample_shape(double cc, const SimWorld& world, Rng& rng) {
  const double voxels = cc * 1000.0 / world.spacing.voxel_mm3();
  const double log_a = std::log(world.max_aspect);
  double l[3];
  for (double& v : l) v = rng.uniform(-log_a, log_a);
  const double mean = (l[0] + l[1] + l[2]) / 3.0;
  const double side = std::cbrt(voxels);
  Vec3 s{side * std::exp(l[0] - mean), side * std::exp(l[1] - mean), side * std::exp(l[2] - mean)};
  s.x = std::min(s.x, world.field.x);
  s.y = std::min(s.y, world.field.y);
  s.z = std::min(s.z, world.field.z);
  return s;
}

double sample_volume(int bin, const SimWorld& world, bool clip_to_min, Rng& rng) {
  const auto [lo, hi] = world.volume_range(bin, clip_to_min);
  return std::exp(rng.uniform(std::log(lo), std::log(hi)));
}

Vec3 sample_corner(const Vec3& size, const SimWorld& world, Rng& rng) {
  return {rng.uniform(0.0, world.field.x - size.x), rng.uniform(0.0, world.field.y - size.y),
          rng.uniform(0.0, world.field.z - size.z)};
}

std::uint64_t subject_key(const std::string& id) { return fnv1a(id); }

}  // namespace

std::string_view to_string(Domain d) { return d == Domain::kSource ? "source" : "target"; }

Domain parse_domain(std::string_view text) {
  if (text == "source") return Domain::kSource;
  if (text == "target") return Domain::kTarget;
  throw std::invalid_argument("unknown domain '" + std::string(text) + "'");
}

void SimWorld::validate() const {
  require(field.x > 0.0 && field.y > 0.0 && field.z > 0.0, "field: dimensions must be positive");
  require(min_volume_cc > 0.0, "min_volume_cc: must be positive");
  require(max_volume_cc > bins.edges().back(), "max_volume_cc: must exceed the last bin edge");
  require(max_aspect >= 1.0, "max_aspect: must be >= 1");
  const double field_cc = field.product() * spacing.voxel_mm3() / 1000.0;
  require(max_volume_cc < field_cc, "max_volume_cc: larger than the field of view");
}

std::pair<double, double> SimWorld::volume_range(int bin, bool clip_to_min) const {
  double lo = bins.lower(bin);
  double hi = std::min(bins.upper(bin), max_volume_cc);
  if (bin == 1) {
    // Open at zero: use one geometric step below the first edge.
    const auto e = bins.edges();
    const double ratio = e.size() > 1 ? e[1] / e[0] : 2.0;
    lo = hi / ratio;
  }
  if (clip_to_min) lo = std::max(lo, min_volume_cc);
  return {lo, hi};
}

void CohortSpec::validate() const {
  world.validate();
  require(n_subjects >= 0, "n_subjects: must be >= 0");
  require(mean_lesions >= 0.0 && std::isfinite(mean_lesions), "mean_lesions: must be >= 0");
  require(dispersion >= 0.0 && std::isfinite(dispersion), "dispersion: must be >= 0");
  require(static_cast<int>(size_hist.size()) == world.bins.num_bins(),
          "size_hist: needs one entry per volume bin (" +
              std::to_string(world.bins.num_bins()) + ")");
  double sum = 0.0;
  for (std::size_t b = 0; b < size_hist.size(); ++b) {
    require(size_hist[b] >= 0.0, "size_hist: entries must be >= 0");
    sum += size_hist[b];
    if (size_hist[b] > 0.0) {
      const auto [lo, hi] = world.volume_range(static_cast<int>(b) + 1, true);
      require(lo < hi, "size_hist: bin " + std::to_string(b + 1) +
                           " lies below min_volume_cc and must have zero mass");
    }
  }
  require(std::abs(sum - 1.0) <= 1e-9, "size_hist: must sum to 1");
}

CohortSpec fdg_like_preset(int n_subjects, std::uint64_t seed) {
  CohortSpec s;
  s.domain = Domain::kSource;
  s.n_subjects = n_subjects;
  s.mean_lesions = 4.0;
  s.dispersion = 0.3;
  s.size_hist = {0.0, 0.04, 0.07, 0.11, 0.15, 0.17, 0.16, 0.13, 0.10, 0.07};
  s.seed = seed;
  return s;
}

CohortSpec psma_like_preset(int n_subjects, std::uint64_t seed) {
  CohortSpec s;
  s.domain = Domain::kTarget;
  s.n_subjects = n_subjects;
  s.mean_lesions = 10.0;
  s.dispersion = 0.4;
  s.size_hist = {0.0, 0.20, 0.24, 0.21, 0.15, 0.09, 0.05, 0.03, 0.02, 0.01};
  s.seed = seed;
  return s;
}

CohortSpec preset_by_name(std::string_view name, int n_subjects, std::uint64_t seed) {
  if (name == "fdg") return fdg_like_preset(n_subjects, seed);
  if (name == "psma") return psma_like_preset(n_subjects, seed);
  throw std::invalid_argument("unknown cohort preset '" + std::string(name) + "'");
}

std::vector<Subject> generate_cohort(const CohortSpec& spec) {
  spec.validate();
  const SimWorld& world = spec.world;
  const std::string prefix = spec.domain == Domain::kSource ? "src-" : "tgt-";
  std::vector<Subject> cohort;
  cohort.reserve(spec.n_subjects);
  for (int i = 0; i < spec.n_subjects; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "%s%04d", prefix.c_str(), i);
    Subject subject{id, spec.domain, {}};

    Rng count_rng(derive_seed(spec.seed, {kStreamCount, static_cast<std::uint64_t>(i)}));
    int count = 0;
    if (spec.mean_lesions > 0.0) {
      double rate = spec.mean_lesions;
      if (spec.dispersion > 0.0) {
        const double shape = 1.0 / spec.dispersion;
        rate = count_rng.gamma(shape) * spec.mean_lesions / shape;
      }
      count = count_rng.poisson(rate);
    }

    for (int j = 0; j < count; ++j) {
      Rng rng(derive_seed(spec.seed, {kStreamLesion, static_cast<std::uint64_t>(i),
                                      static_cast<std::uint64_t>(j)}));
      const int bin = static_cast<int>(rng.categorical(spec.size_hist)) + 1;
      const double cc = sample_volume(bin, world, true, rng);
      const Vec3 size = sample_shape(cc, world, rng);
      bool placed = false;
      for (int attempt = 0; attempt < kPlacementRetries && !placed; ++attempt) {
        const Box3 candidate(sample_corner(size, world, rng), size);
        const bool clash = std::any_of(
            subject.gt_boxes.begin(), subject.gt_boxes.end(),
            [&](const Box3& other) { return iou(candidate, other) > kGtOverlapCap; });
        if (!clash) {
          subject.gt_boxes.push_back(candidate);
          placed = true;
        }
      }
      if (!placed) {
        throw std::runtime_error("could not place lesion " + std::to_string(j) +
                                 " of subject " + subject.id + " without overlap");
      }
    }
    cohort.push_back(std::move(subject));
  }
  return cohort;
}

std::vector<double> cohort_histogram(std::span<const Subject> cohort, const SimWorld& world) {
  std::vector<Box3> boxes;
  for (const auto& s : cohort) boxes.insert(boxes.end(), s.gt_boxes.begin(), s.gt_boxes.end());
  return volume_histogram(boxes, world.spacing, world.bins);
}

void DetectorParams::validate() const {
  require(in_unit(recall_mixing), "recall_mixing: must lie in [0, 1]");
  require(positive_iou > 0.0 && positive_iou <= 1.0, "positive_iou: must lie in (0, 1]");
  require(jitter_sigma >= 0.0, "jitter_sigma: must be >= 0");
  require(tp_conf_sd >= 0.0 && fp_conf_sd >= 0.0, "confidence spreads must be >= 0");
  require(min_fp_rate >= 0.0, "min_fp_rate: must be >= 0");
  require(support_per_subject >= 0.0, "support_per_subject: must be >= 0");
  require(size_transfer >= 0.0 && size_transfer < 1.0, "size_transfer: must lie in [0, 1)");
  require(in_unit(initial_recall), "initial_recall: must lie in [0, 1]");
  require(initial_fp_rate >= 0.0, "initial_fp_rate: must be >= 0");
  require(in_unit(pretrain_rate), "pretrain_rate: must lie in [0, 1]");
  require(pretrain_iterations >= 0, "pretrain_iterations: must be >= 0");
  require(in_unit(target_transfer), "target_transfer: must lie in [0, 1]");
  require(target_fp_factor >= 0.0, "target_fp_factor: must be >= 0");
}

SimDetector SimDetector::untrained(const DetectorParams& params, int num_bins) {
  params.validate();
  SimDetector d;
  d.params = params;
  const std::vector<double> uniform(num_bins, 1.0 / num_bins);
  d.source = {std::vector<double>(num_bins, params.initial_recall), params.initial_fp_rate,
              uniform};
  d.target = d.source;
  return d;
}

void SimDetector::validate() const {
  params.validate();
  for (const DomainSkill* s : {&source, &target}) {
    for (double r : s->recall) require(in_unit(r), "recall must lie in [0, 1]");
    require(s->fp_rate >= 0.0, "false-positive rate must be >= 0");
    require(s->belief.size() == s->recall.size(), "belief and recall differ in length");
  }
}

double anchor_fit_factor(const DetectorParams& params, double coverage) {
  const double fit = std::min(1.0, coverage / params.positive_iou);
  return params.recall_mixing + (1.0 - params.recall_mixing) * fit;
}

std::vector<Detection> infer(const SimDetector& detector, const Subject& subject,
                             const AnchorSet& anchors, const SimWorld& world, std::uint64_t seed) {
  const DetectorParams& p = detector.params;
  const DomainSkill& skill = detector.skill(subject.domain);
  const int n_bins = world.bins.num_bins();
  const std::uint64_t key = subject_key(subject.id);
  std::vector<Detection> out;

  for (std::size_t j = 0; j < subject.gt_boxes.size(); ++j) {
    const Box3& gt = subject.gt_boxes[j];
    // Fixed draw count per lesion keeps arms on common random numbers.
    Rng rng(derive_seed(seed, {key, kStreamLesion, j}));
    const double u_detect = rng.uniform();
    const double n_conf = rng.normal();
    double jit[6];
    for (double& v : jit) v = rng.normal();

    const int bin = bin_of(gt, world.spacing, world.bins);
    const double recall = skill.recall[bin - 1];
    const double coverage = anchor_coverage(shape_of(gt), anchors);
    const double factor = anchor_fit_factor(p, coverage);
    if (!(u_detect < recall * factor)) continue;

    const double sigma = p.jitter_sigma * (1.0 - coverage);
    const Vec3 c = gt.center();
    const Vec3 s = gt.size();
    const Vec3 size{s.x * std::exp(sigma * jit[3]), s.y * std::exp(sigma * jit[4]),
                    s.z * std::exp(sigma * jit[5])};
    const Vec3 center{c.x + sigma * s.x * jit[0], c.y + sigma * s.y * jit[1],
                      c.z + sigma * s.z * jit[2]};

    const double size_rank = n_bins > 1 ? static_cast<double>(bin - 1) / (n_bins - 1) : 0.5;
    const double fit = (factor - p.recall_mixing) / std::max(1e-12, 1.0 - p.recall_mixing);
    const double mean = p.tp_conf_base + p.tp_conf_size_gain * (size_rank - 0.5) +
                        p.tp_conf_skill_gain * (recall - 0.5) + p.tp_conf_fit_gain * (fit - 0.5);
    out.emplace_back(Box3::from_center(center, size),
                     std::clamp(mean + p.tp_conf_sd * n_conf, 0.0, 1.0));
  }

  Rng fp_rng(derive_seed(seed, {key, kStreamFalsePositive}));
  const int n_fp = fp_rng.poisson(skill.fp_rate);
  for (int k = 0; k < n_fp; ++k) {
    Rng rng(derive_seed(seed, {key, kStreamFalsePositive, static_cast<std::uint64_t>(k)}));
    const int bin = static_cast<int>(rng.categorical(skill.belief)) + 1;
    const double cc = sample_volume(bin, world, false, rng);
    const Vec3 size = sample_shape(cc, world, rng);
    const Vec3 corner = sample_corner(size, world, rng);
    const double conf = std::clamp(rng.normal(p.fp_conf_mean, p.fp_conf_sd), 0.0, 1.0);
    out.emplace_back(Box3(corner, size), conf);
  }
  return out;
}

PseudoLabelSet labels_from_ground_truth(std::span<const Subject> subjects) {
  PseudoLabelSet labels;
  for (const auto& s : subjects) labels.subjects.push_back({s.id, s.gt_boxes});
  return labels;
}

SimDetector train_update(const SimDetector& detector, Domain domain,
                         const PseudoLabelSet& labels, std::span<const Subject> subjects,
                         const AnchorSet& anchors, const SimWorld& world, double rate) {
  if (labels.total() == 0) return detector;
  std::map<std::string, const Subject*> by_id;
  for (const auto& s : subjects) by_id.emplace(s.id, &s);

  const int n_bins = world.bins.num_bins();
  std::vector<double> count(n_bins, 0.0);
  std::vector<double> correct(n_bins, 0.0);
  std::vector<double> fit_sum(n_bins, 0.0);
  std::vector<Box3> all;
  for (const auto& entry : labels.subjects) {
    const auto it = by_id.find(entry.subject_id);
    if (it == by_id.end()) {
      throw std::invalid_argument("labels reference unknown subject " + entry.subject_id);
    }
    std::vector<Detection> as_dets;
    for (const auto& b : entry.boxes) as_dets.emplace_back(b, 1.0);
    const MatchResult m = match_greedy(std::move(as_dets), it->second->gt_boxes, kLabelMatchIou);
    for (std::size_t i = 0; i < m.ranked.size(); ++i) {
      const Box3& box = m.ranked[i].box();
      const int b = bin_of(box, world.spacing, world.bins) - 1;
      count[b] += 1.0;
      correct[b] += m.is_tp[i] ? 1.0 : 0.0;
      fit_sum[b] += anchor_fit_factor(detector.params, anchor_coverage(shape_of(box), anchors));
      all.push_back(box);
    }
  }

  SimDetector out = detector;
  DomainSkill& skill = out.skill(domain);
  const double n_subjects = static_cast<double>(labels.subjects.size());
  const double support_full = detector.params.support_per_subject * n_subjects;
  std::vector<double> drive(n_bins, 0.0);
  for (int b = 0; b < n_bins; ++b) {
    if (count[b] == 0.0) continue;
    const double precision = correct[b] / count[b];
    const double fit = fit_sum[b] / count[b];
    const double support = support_full > 0.0 ? std::min(1.0, count[b] / support_full) : 1.0;
    drive[b] = precision * support * fit;
  }
  const double transfer = detector.params.size_transfer;
  for (int b = 0; b < n_bins; ++b) {
    double g = 0.0;
    for (int src = 0; src < n_bins; ++src) {
      g = std::max(g, drive[src] * std::pow(transfer, std::abs(b - src)));
    }
    double& r = skill.recall[b];
    r = std::clamp(r + rate * g * (1.0 - r), 0.0, 1.0);
  }

  const double total = std::accumulate(count.begin(), count.end(), 0.0);
  const double precision = std::accumulate(correct.begin(), correct.end(), 0.0) / total;
  skill.fp_rate = std::max(detector.params.min_fp_rate, skill.fp_rate * (1.0 - rate * precision));
  if (skill.fp_rate > detector.skill(domain).fp_rate) skill.fp_rate = detector.skill(domain).fp_rate;

  const auto label_hist = volume_histogram(all, world.spacing, world.bins);
  std::vector<double> belief(n_bins);
  for (int b = 0; b < n_bins; ++b) {
    belief[b] = (1.0 - rate) * skill.belief[b] + rate * label_hist[b];
  }
  skill.belief = normalized(belief);
  return out;
}

SimDetector source_pretrain(const SimDetector& detector, std::span<const Subject> source,
                            const AnchorSet& anchors, const SimWorld& world) {
  SimDetector out = detector;
  const PseudoLabelSet gt = labels_from_ground_truth(source);
  for (int i = 0; i < detector.params.pretrain_iterations; ++i) {
    out = train_update(out, Domain::kSource, gt, source, anchors, world,
                       detector.params.pretrain_rate);
  }
  if (gt.total() > 0) out.source.belief = cohort_histogram(source, world);

  out.target.recall = out.source.recall;
  for (double& r : out.target.recall) r *= detector.params.target_transfer;
  out.target.fp_rate = out.source.fp_rate * detector.params.target_fp_factor;
  out.target.belief = out.source.belief;
  return out;
}

}  // namespace lsadapt
