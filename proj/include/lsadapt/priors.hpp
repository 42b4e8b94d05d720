#pragma once

#include <span>
#include <vector>

#include "lsadapt/geometry.hpp"

namespace lsadapt {

/// Target label-distribution priors: mean lesions per subject and a
/// normalized histogram over volume bins.
class PriorState {
 public:
  PriorState(double mu, std::vector<double> hist, int round = 0);

  double mu() const { return mu_; }
  std::span<const double> hist() const { return hist_; }
  int num_bins() const { return static_cast<int>(hist_.size()); }
  int round() const { return round_; }

  friend bool operator==(const PriorState&, const PriorState&) = default;

 private:
  double mu_;
  std::vector<double> hist_;
  int round_;
};

/// Integer slots per bin.
struct Quota {
  std::vector<int> per_bin;
  int total = 0;
};

/// mu <- (1 - alpha) mu + alpha * mean(counts). Throws on an empty list.
double update_mu(const PriorState& prev, std::span<const int> selected_counts, double alpha_mu);

/// Per-subject budget round-half-up(lambda * mu).
int budget(double mu, double lambda);

/// Normalized bin-count histogram of `boxes`; all zeros if there are none.
std::vector<double> volume_histogram(std::span<const Box3> boxes, const Spacing& spacing,
                                     const BinningConfig& bins);

/// h <- normalize((1 - alpha) h + alpha * h_hat). Returns `prev.hist()`
/// unchanged if no boxes were selected.
std::vector<double> update_hist(const PriorState& prev, std::span<const Box3> selected_boxes,
                                const BinningConfig& bins, const Spacing& spacing,
                                double alpha_h);

/// Largest-remainder apportionment of n_allow slots proportional to `hist`.
/// The histogram is normalized internally; remainder ties go to the lower bin.
Quota allocate_quota(std::span<const double> hist, int n_allow);

/// Half the L1 distance between two histograms.
double total_variation(std::span<const double> a, std::span<const double> b);

/// Scales a nonnegative vector to unit L1 norm. Throws if it sums to zero.
std::vector<double> normalized(std::span<const double> v);

}  // namespace lsadapt
