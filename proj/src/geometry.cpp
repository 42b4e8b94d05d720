#include "lsadapt/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace lsadapt {

namespace {

bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }

double overlap_1d(double a_lo, double a_len, double b_lo, double b_len) {
  const double lo = std::max(a_lo, b_lo);
  const double hi = std::min(a_lo + a_len, b_lo + b_len);
  return std::max(0.0, hi - lo);
}

}  // namespace

Spacing::Spacing(double dx, double dy, double dz) : mm_{dx, dy, dz} {
  if (!positive_finite(dx) || !positive_finite(dy) || !positive_finite(dz)) {
    throw std::invalid_argument("spacing components must be positive and finite");
  }
}

Spacing default_spacing() { return Spacing(4.0, 4.0, 5.0); }

Box3::Box3(Vec3 min_corner, Vec3 size) : min_(min_corner), size_(size) {
  if (!positive_finite(size.x) || !positive_finite(size.y) || !positive_finite(size.z)) {
    throw std::invalid_argument("box size must be positive in every axis");
  }
  if (!std::isfinite(min_corner.x) || !std::isfinite(min_corner.y) ||
      !std::isfinite(min_corner.z)) {
    throw std::invalid_argument("box corner must be finite");
  }
}

Box3 Box3::from_center(Vec3 center, Vec3 size) {
  return Box3({center.x - 0.5 * size.x, center.y - 0.5 * size.y, center.z - 0.5 * size.z},
              size);
}

BinningConfig::BinningConfig(std::vector<double> edges) : edges_(std::move(edges)) {
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    if (!positive_finite(edges_[i])) {
      throw std::invalid_argument("bin edge " + std::to_string(i) + " must be positive");
    }
    if (i > 0 && !(edges_[i] > edges_[i - 1])) {
      throw std::invalid_argument("bin edges must be strictly increasing");
    }
  }
}

BinningConfig BinningConfig::default_bins() {
  constexpr double lo = 0.08;
  constexpr double hi = 150.0;
  constexpr int n_edges = 9;
  std::vector<double> edges(n_edges);
  for (int i = 0; i < n_edges; ++i) {
    edges[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (n_edges - 1));
  }
  edges.front() = lo;
  edges.back() = hi;
  return BinningConfig(std::move(edges));
}

double BinningConfig::lower(int bin) const {
  if (bin < 1 || bin > num_bins()) throw std::out_of_range("bin index out of range");
  return bin == 1 ? 0.0 : edges_[bin - 2];
}

double BinningConfig::upper(int bin) const {
  if (bin < 1 || bin > num_bins()) throw std::out_of_range("bin index out of range");
  return bin == num_bins() ? std::numeric_limits<double>::infinity() : edges_[bin - 1];
}

int BinningConfig::bin_of_volume(double cc) const {
  // First edge strictly greater than cc: volumes on an edge go to the upper bin.
  const auto it = std::upper_bound(edges_.begin(), edges_.end(), cc);
  return static_cast<int>(it - edges_.begin()) + 1;
}

double volume_cc(const Box3& box, const Spacing& spacing) {
  return box.voxels() * spacing.voxel_mm3() / 1000.0;
}

double intersection_voxels(const Box3& a, const Box3& b) {
  const Vec3& am = a.min_corner();
  const Vec3& bm = b.min_corner();
  const Vec3& as = a.size();
  const Vec3& bs = b.size();
  return overlap_1d(am.x, as.x, bm.x, bs.x) * overlap_1d(am.y, as.y, bm.y, bs.y) *
         overlap_1d(am.z, as.z, bm.z, bs.z);
}

double iou(const Box3& a, const Box3& b) {
  const double inter = intersection_voxels(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.voxels() + b.voxels() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

int bin_of(const Box3& box, const Spacing& spacing, const BinningConfig& cfg) {
  return cfg.bin_of_volume(volume_cc(box, spacing));
}

Shape3 shape_of(const Box3& box) { return box.size(); }

double centered_iou(const Shape3& a, const Shape3& b) {
  const double inter = std::min(a.x, b.x) * std::min(a.y, b.y) * std::min(a.z, b.z);
  const double uni = a.product() + b.product() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace lsadapt
