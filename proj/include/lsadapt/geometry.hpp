#pragma once

#include <array>
#include <span>
#include <vector>

namespace lsadapt {

/// Three reals, used both for positions (voxel coordinates) and extents.
struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Vec3&, const Vec3&) = default;
  double product() const { return x * y * z; }
  double operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
};

/// Physical voxel size in millimeters.
class Spacing {
 public:
  Spacing(double dx, double dy, double dz);

  double dx() const { return mm_.x; }
  double dy() const { return mm_.y; }
  double dz() const { return mm_.z; }
  /// Volume of one voxel in mm^3.
  double voxel_mm3() const { return mm_.product(); }
  Vec3 mm() const { return mm_; }

  friend bool operator==(const Spacing&, const Spacing&) = default;

 private:
  Vec3 mm_;
};

/// Working resolution of the reference protocol: 4 x 4 x 5 mm.
Spacing default_spacing();

/// Extent of a box in voxels, independent of its position.
using Shape3 = Vec3;

/// Axis-aligned box stored as min corner + strictly positive size (voxels).
/// Sub-voxel coordinates are allowed.
class Box3 {
 public:
  Box3(Vec3 min_corner, Vec3 size);

  static Box3 from_center(Vec3 center, Vec3 size);

  const Vec3& min_corner() const { return min_; }
  const Vec3& size() const { return size_; }
  Vec3 max_corner() const { return {min_.x + size_.x, min_.y + size_.y, min_.z + size_.z}; }
  Vec3 center() const {
    return {min_.x + 0.5 * size_.x, min_.y + 0.5 * size_.y, min_.z + 0.5 * size_.z};
  }
  double voxels() const { return size_.product(); }

  /// The six coordinates in the order x y z w h d.
  std::array<double, 6> coords() const {
    return {min_.x, min_.y, min_.z, size_.x, size_.y, size_.z};
  }

  friend bool operator==(const Box3&, const Box3&) = default;

 private:
  Vec3 min_;
  Vec3 size_;
};

/// Volume bins in cc. `edges` holds the B-1 interior thresholds; bin 1 starts
/// at 0 and bin B is open-ended. Intervals are half-open [lo, hi).
class BinningConfig {
 public:
  explicit BinningConfig(std::vector<double> edges);

  /// Nine geometric edges from 0.08 cc to 150 cc, i.e. ten bins.
  static BinningConfig default_bins();

  int num_bins() const { return static_cast<int>(edges_.size()) + 1; }
  std::span<const double> edges() const { return edges_; }

  /// Lower bound of the 1-based bin, 0 for the first bin.
  double lower(int bin) const;
  /// Upper bound of the 1-based bin; +inf for the last bin.
  double upper(int bin) const;

  /// 1-based bin index for a volume in cc.
  int bin_of_volume(double cc) const;

  friend bool operator==(const BinningConfig&, const BinningConfig&) = default;

 private:
  std::vector<double> edges_;
};

double volume_cc(const Box3& box, const Spacing& spacing);

/// Intersection over union in voxel space; 0 for disjoint boxes.
double iou(const Box3& a, const Box3& b);

/// Overlap volume in voxels.
double intersection_voxels(const Box3& a, const Box3& b);

/// 1-based volume bin of a box.
int bin_of(const Box3& box, const Spacing& spacing, const BinningConfig& cfg);

Shape3 shape_of(const Box3& box);

/// IoU of two boxes of the given shapes sharing a common center.
double centered_iou(const Shape3& a, const Shape3& b);

}  // namespace lsadapt
