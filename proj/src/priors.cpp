#include "lsadapt/priors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace lsadapt {

PriorState::PriorState(double mu, std::vector<double> hist, int round)
    : mu_(mu), hist_(std::move(hist)), round_(round) {
  if (!(mu_ >= 0.0) || !std::isfinite(mu_)) throw std::invalid_argument("mu must be >= 0");
  if (hist_.empty()) throw std::invalid_argument("histogram needs at least one bin");
  double sum = 0.0;
  for (double v : hist_) {
    if (!(v >= 0.0)) throw std::invalid_argument("histogram entries must be >= 0");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("histogram must sum to 1");
}

double update_mu(const PriorState& prev, std::span<const int> selected_counts, double alpha_mu) {
  if (selected_counts.empty()) throw std::invalid_argument("mu update needs at least one subject");
  const double total = std::accumulate(selected_counts.begin(), selected_counts.end(), 0.0);
  const double mean = total / static_cast<double>(selected_counts.size());
  return (1.0 - alpha_mu) * prev.mu() + alpha_mu * mean;
}

int budget(double mu, double lambda) {
  if (!(mu >= 0.0)) throw std::invalid_argument("budget needs mu >= 0");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw std::invalid_argument("budget needs lambda in (0, 1]");
  return static_cast<int>(std::floor(lambda * mu + 0.5));
}

std::vector<double> normalized(std::span<const double> v) {
  const double sum = std::accumulate(v.begin(), v.end(), 0.0);
  if (!(sum > 0.0)) throw std::invalid_argument("cannot normalize a zero vector");
  std::vector<double> out(v.begin(), v.end());
  for (auto& x : out) x /= sum;
  return out;
}

std::vector<double> volume_histogram(std::span<const Box3> boxes, const Spacing& spacing,
                                     const BinningConfig& bins) {
  std::vector<double> hist(bins.num_bins(), 0.0);
  if (boxes.empty()) return hist;
  for (const auto& b : boxes) hist[bin_of(b, spacing, bins) - 1] += 1.0;
  for (auto& v : hist) v /= static_cast<double>(boxes.size());
  return hist;
}

std::vector<double> update_hist(const PriorState& prev, std::span<const Box3> selected_boxes,
                                const BinningConfig& bins, const Spacing& spacing,
                                double alpha_h) {
  if (bins.num_bins() != prev.num_bins()) {
    throw std::invalid_argument("binning does not match the prior histogram");
  }
  const auto old = prev.hist();
  if (selected_boxes.empty()) return {old.begin(), old.end()};
  const auto h_hat = volume_histogram(selected_boxes, spacing, bins);
  std::vector<double> blended(old.size());
  for (std::size_t b = 0; b < old.size(); ++b) {
    blended[b] = (1.0 - alpha_h) * old[b] + alpha_h * h_hat[b];
  }
  return normalized(blended);
}

Quota allocate_quota(std::span<const double> hist, int n_allow) {
  if (n_allow < 0) throw std::invalid_argument("quota total must be >= 0");
  Quota q;
  q.total = n_allow;
  q.per_bin.assign(hist.size(), 0);
  if (n_allow == 0) return q;
  const auto h = normalized(hist);

  std::vector<double> frac(h.size());
  int assigned = 0;
  for (std::size_t b = 0; b < h.size(); ++b) {
    const double share = h[b] * n_allow;
    const double whole = std::floor(share);
    q.per_bin[b] = static_cast<int>(whole);
    frac[b] = share - whole;
    assigned += q.per_bin[b];
  }

  std::vector<std::size_t> order(h.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  // Float error can leave the floors a slot short of or past n_allow.
  for (std::size_t i = 0; assigned < n_allow; i = (i + 1) % order.size()) {
    ++q.per_bin[order[i]];
    ++assigned;
  }
  for (std::size_t i = order.size(); assigned > n_allow;) {
    i = (i == 0 ? order.size() : i) - 1;
    if (q.per_bin[order[i]] > 0) {
      --q.per_bin[order[i]];
      --assigned;
    }
  }
  return q;
}

double total_variation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("histograms differ in length");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
  return 0.5 * sum;
}

}  // namespace lsadapt
