#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lsadapt/geometry.hpp"

namespace lsadapt {

/// Momenta of the three exponential moving averages (anchors, lesion count,
/// size histogram). Each weights the *new* estimate; all must lie in (0, 1).
struct EmaConfig {
  double beta = 0.9;
  double alpha_mu = 0.9;
  double alpha_h = 0.9;

  void validate() const;
};

/// Anchor shapes in voxels, kept in ascending-volume order, plus the round
/// that produced them.
class AnchorSet {
 public:
  AnchorSet(std::vector<Shape3> shapes, int round = 0);

  std::span<const Shape3> shapes() const { return shapes_; }
  int size() const { return static_cast<int>(shapes_.size()); }
  int round() const { return round_; }

  friend bool operator==(const AnchorSet&, const AnchorSet&) = default;

 private:
  std::vector<Shape3> shapes_;
  int round_;
};

/// Sorts shapes by volume, ties broken lexicographically.
void sort_canonical(std::vector<Shape3>& shapes);

struct KMeansResult {
  std::vector<Shape3> centroids;  // canonical order
  /// Within-cluster sum of squared distances after each Lloyd step.
  std::vector<double> sse_trace;
  int iterations = 0;
};

/// Lloyd's k-means on box extents with k-means++ seeding.
/// Throws std::invalid_argument when fewer than k boxes are given.
KMeansResult kmeans_shapes_detailed(std::span<const Box3> boxes, int k, std::uint64_t seed,
                                    int max_iterations = 100);

std::vector<Shape3> kmeans_shapes(std::span<const Box3> boxes, int k, std::uint64_t seed);

/// s_k <- (1 - beta) s_k + beta * new_k, componentwise; round advances by one.
AnchorSet ema_update_anchors(const AnchorSet& prev, std::span<const Shape3> new_centroids,
                             double beta);

/// Best co-centered IoU between the lesion shape and any anchor.
double anchor_coverage(const Shape3& lesion, const AnchorSet& anchors);

}  // namespace lsadapt
