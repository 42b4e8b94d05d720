#include "lsadapt/anchors.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <tuple>

namespace lsadapt {

namespace {

double sq_dist(const Shape3& a, const Shape3& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

bool canonical_less(const Shape3& a, const Shape3& b) {
  const double va = a.product();
  const double vb = b.product();
  if (va != vb) return va < vb;
  return std::tie(a.x, a.y, a.z) < std::tie(b.x, b.y, b.z);
}

std::size_t nearest(const Shape3& p, std::span<const Shape3> centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = sq_dist(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::vector<Shape3> plus_plus_seeds(std::span<const Shape3> pts, int k, std::mt19937_64& rng) {
  std::vector<Shape3> centroids;
  centroids.reserve(k);
  std::uniform_int_distribution<std::size_t> first(0, pts.size() - 1);
  centroids.push_back(pts[first(rng)]);
  std::vector<double> d2(pts.size(), std::numeric_limits<double>::infinity());
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      d2[i] = std::min(d2[i], sq_dist(pts[i], centroids.back()));
      total += d2[i];
    }
    if (total <= 0.0) {
      // Fewer distinct shapes than k: duplicate centroids, repaired in Lloyd.
      centroids.push_back(pts[first(rng)]);
      continue;
    }
    std::uniform_real_distribution<double> u(0.0, total);
    const double target = u(rng);
    double acc = 0.0;
    std::size_t pick = pts.size() - 1;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      acc += d2[i];
      if (acc >= target && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
    centroids.push_back(pts[pick]);
  }
  return centroids;
}

}  // namespace

void EmaConfig::validate() const {
  auto check = [](double v, const char* name) {
    if (!(v > 0.0 && v < 1.0)) {
      throw std::invalid_argument(std::string(name) + " must lie in the open interval (0, 1)");
    }
  };
  check(beta, "beta");
  check(alpha_mu, "alpha_mu");
  check(alpha_h, "alpha_h");
}

AnchorSet::AnchorSet(std::vector<Shape3> shapes, int round)
    : shapes_(std::move(shapes)), round_(round) {
  if (shapes_.empty()) throw std::invalid_argument("anchor set needs at least one shape");
  if (round_ < 0) throw std::invalid_argument("anchor round must be >= 0");
  for (const auto& s : shapes_) {
    if (!(s.x > 0.0 && s.y > 0.0 && s.z > 0.0)) {
      throw std::invalid_argument("anchor shape components must be positive");
    }
  }
  sort_canonical(shapes_);
}

void sort_canonical(std::vector<Shape3>& shapes) {
  std::stable_sort(shapes.begin(), shapes.end(), canonical_less);
}

KMeansResult kmeans_shapes_detailed(std::span<const Box3> boxes, int k, std::uint64_t seed,
                                    int max_iterations) {
  if (k < 1) throw std::invalid_argument("k-means needs k >= 1");
  if (boxes.size() < static_cast<std::size_t>(k)) {
    throw std::invalid_argument("k-means needs at least k=" + std::to_string(k) +
                                " boxes, got " + std::to_string(boxes.size()));
  }
  std::vector<Shape3> pts;
  pts.reserve(boxes.size());
  for (const auto& b : boxes) pts.push_back(shape_of(b));

  std::mt19937_64 rng(seed);
  KMeansResult out;
  out.centroids = plus_plus_seeds(pts, k, rng);

  std::vector<std::size_t> assign(pts.size(), 0);
  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = iter == 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const std::size_t c = nearest(pts[i], out.centroids);
      if (c != assign[i]) {
        assign[i] = c;
        changed = true;
      }
    }

    // Empty clusters take the point farthest from its own centroid.
    std::vector<std::size_t> counts(k, 0);
    for (auto a : assign) ++counts[a];
    for (int c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        if (counts[assign[i]] <= 1) continue;
        const double d = sq_dist(pts[i], out.centroids[assign[i]]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      --counts[assign[far]];
      assign[far] = static_cast<std::size_t>(c);
      ++counts[c];
      changed = true;
    }

    std::vector<Shape3> sums(k);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      auto& s = sums[assign[i]];
      s.x += pts[i].x;
      s.y += pts[i].y;
      s.z += pts[i].z;
    }
    for (int c = 0; c < k; ++c) {
      const double n = static_cast<double>(counts[c]);
      out.centroids[c] = {sums[c].x / n, sums[c].y / n, sums[c].z / n};
    }

    double sse = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) sse += sq_dist(pts[i], out.centroids[assign[i]]);
    out.sse_trace.push_back(sse);
    out.iterations = iter + 1;
    if (!changed) break;
  }
  sort_canonical(out.centroids);
  return out;
}

std::vector<Shape3> kmeans_shapes(std::span<const Box3> boxes, int k, std::uint64_t seed) {
  return kmeans_shapes_detailed(boxes, k, seed).centroids;
}

AnchorSet ema_update_anchors(const AnchorSet& prev, std::span<const Shape3> new_centroids,
                             double beta) {
  if (static_cast<int>(new_centroids.size()) != prev.size()) {
    throw std::invalid_argument("anchor count mismatch: have " + std::to_string(prev.size()) +
                                ", got " + std::to_string(new_centroids.size()));
  }
  std::vector<Shape3> blended;
  blended.reserve(new_centroids.size());
  const auto old = prev.shapes();
  for (std::size_t k = 0; k < new_centroids.size(); ++k) {
    const auto& a = old[k];
    const auto& b = new_centroids[k];
    blended.push_back({(1.0 - beta) * a.x + beta * b.x, (1.0 - beta) * a.y + beta * b.y,
                       (1.0 - beta) * a.z + beta * b.z});
  }
  return AnchorSet(std::move(blended), prev.round() + 1);
}

double anchor_coverage(const Shape3& lesion, const AnchorSet& anchors) {
  double best = 0.0;
  for (const auto& a : anchors.shapes()) best = std::max(best, centered_iou(lesion, a));
  return best;
}

}  // namespace lsadapt
