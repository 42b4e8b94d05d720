#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lsadapt/geometry.hpp"

namespace lsadapt {
namespace {

Box3 cube(double x, double y, double z, double side = 1.0) { return Box3({x, y, z}, {side, side, side}); }

TEST(Spacing, RejectsNonPositive) {
  EXPECT_THROW(Spacing(0, 1, 1), std::invalid_argument);
  EXPECT_THROW(Spacing(1, -1, 1), std::invalid_argument);
  EXPECT_NO_THROW(Spacing(0.5, 0.5, 0.5));
}

TEST(Box3, RejectsDegenerateSize) {
  EXPECT_THROW(Box3({0, 0, 0}, {0, 1, 1}), std::invalid_argument);
  EXPECT_THROW(Box3({0, 0, 0}, {1, 1, -2}), std::invalid_argument);
}

TEST(Box3, CenterRoundTrip) {
  const Box3 b = Box3::from_center({5, 6, 7}, {2, 4, 6});
  EXPECT_EQ(b.min_corner(), (Vec3{4, 4, 4}));
  EXPECT_EQ(b.max_corner(), (Vec3{6, 8, 10}));
  EXPECT_EQ(b.center(), (Vec3{5, 6, 7}));
}

TEST(VolumeCc, UnitVoxelAtWorkingSpacing) {
  EXPECT_DOUBLE_EQ(volume_cc(cube(0, 0, 0), default_spacing()), 0.08);
}

TEST(VolumeCc, TwoCubedBox) {
  EXPECT_DOUBLE_EQ(volume_cc(cube(3, 1, 2, 2.0), default_spacing()), 0.64);
}

TEST(Iou, IdenticalAndDisjoint) {
  EXPECT_DOUBLE_EQ(iou(cube(1, 2, 3), cube(1, 2, 3)), 1.0);
  EXPECT_DOUBLE_EQ(iou(cube(0, 0, 0), cube(5, 0, 0)), 0.0);
  // Touching faces share no volume.
  EXPECT_DOUBLE_EQ(iou(cube(0, 0, 0), cube(1, 0, 0)), 0.0);
}

TEST(Iou, HalfShiftedUnitCubes) {
  EXPECT_NEAR(iou(cube(0, 0, 0), cube(0.5, 0, 0)), 1.0 / 3.0, 1e-15);
}

TEST(BinOf, DefaultEdges) {
  const BinningConfig bins = BinningConfig::default_bins();
  ASSERT_EQ(bins.num_bins(), 10);
  EXPECT_DOUBLE_EQ(bins.edges().front(), 0.08);
  EXPECT_NEAR(bins.edges().back(), 150.0, 1e-9);
  EXPECT_EQ(bins.bin_of_volume(0.01), 1);
  EXPECT_EQ(bins.bin_of_volume(1e6), 10);
  for (int i = 0; i < 9; ++i) {
    EXPECT_EQ(bins.bin_of_volume(bins.edges()[i]), i + 2) << "edge " << i;
  }
  EXPECT_EQ(bins.lower(1), 0.0);
  EXPECT_TRUE(std::isinf(bins.upper(10)));
}

TEST(BinOf, UnitVoxelSitsOnFirstEdge) {
  // Exactly on an edge goes to the upper bin.
  EXPECT_EQ(bin_of(cube(0, 0, 0), default_spacing(), BinningConfig::default_bins()), 2);
}

TEST(BinningConfig, RejectsUnorderedEdges) {
  EXPECT_THROW(BinningConfig({1.0, 1.0}), std::invalid_argument);
  EXPECT_THROW(BinningConfig({2.0, 1.0}), std::invalid_argument);
}

TEST(ShapeOf, TranslationInvariant) {
  const Box3 a({0, 0, 0}, {3, 4, 5});
  const Box3 b({10, -2, 7}, {3, 4, 5});
  EXPECT_EQ(shape_of(a), (Shape3{3, 4, 5}));
  EXPECT_EQ(shape_of(a), shape_of(b));
  const Spacing sp = default_spacing();
  EXPECT_NEAR(shape_of(a).product() * sp.voxel_mm3(), volume_cc(a, sp) * 1000.0, 1e-9);
}

TEST(CenteredIou, NestedShapes) {
  EXPECT_DOUBLE_EQ(centered_iou({2, 2, 2}, {2, 2, 2}), 1.0);
  EXPECT_DOUBLE_EQ(centered_iou({1, 1, 1}, {2, 2, 2}), 1.0 / 8.0);
  EXPECT_DOUBLE_EQ(centered_iou({4, 1, 1}, {1, 4, 1}), 1.0 / 7.0);
}

// ---- properties over random boxes ----

class RandomBoxes : public ::testing::Test {
 protected:
  std::mt19937_64 gen{20240611};
  Box3 random_box() {
    std::uniform_real_distribution<double> pos(-5, 5), ext(0.1, 6);
    return Box3({pos(gen), pos(gen), pos(gen)}, {ext(gen), ext(gen), ext(gen)});
  }
};

TEST_F(RandomBoxes, IouSymmetricBoundedAndReflexive) {
  for (int i = 0; i < 5000; ++i) {
    const Box3 a = random_box(), b = random_box();
    const double ab = iou(a, b);
    EXPECT_EQ(ab, iou(b, a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    EXPECT_NEAR(iou(a, a), 1.0, 1e-12);
  }
}

TEST_F(RandomBoxes, IouInvariantUnderTranslationAndAxisPermutation) {
  std::uniform_real_distribution<double> shift(-20, 20);
  for (int i = 0; i < 5000; ++i) {
    const Box3 a = random_box(), b = random_box();
    const Vec3 t{shift(gen), shift(gen), shift(gen)};
    auto move = [&](const Box3& x) {
      const Vec3 m = x.min_corner();
      return Box3({m.x + t.x, m.y + t.y, m.z + t.z}, x.size());
    };
    auto permute = [](const Box3& x) {  // (x, y, z) -> (z, x, y)
      const Vec3 m = x.min_corner(), s = x.size();
      return Box3({m.z, m.x, m.y}, {s.z, s.x, s.y});
    };
    EXPECT_NEAR(iou(move(a), move(b)), iou(a, b), 1e-9);
    EXPECT_NEAR(iou(permute(a), permute(b)), iou(a, b), 1e-12);
  }
}

TEST_F(RandomBoxes, VolumeIndependentOfPosition) {
  const Spacing sp = default_spacing();
  for (int i = 0; i < 1000; ++i) {
    const Box3 a = random_box();
    const Box3 moved({a.min_corner().x + 3, a.min_corner().y - 1, a.min_corner().z}, a.size());
    EXPECT_EQ(volume_cc(a, sp), volume_cc(moved, sp));
  }
}

TEST(BinOfProperty, MonotoneInVolume) {
  const BinningConfig bins = BinningConfig::default_bins();
  int prev = 1;
  for (double cc = 0.0; cc < 400.0; cc = cc * 1.01 + 0.001) {
    const int b = bins.bin_of_volume(cc);
    EXPECT_GE(b, prev);
    EXPECT_GE(b, 1);
    EXPECT_LE(b, bins.num_bins());
    EXPECT_GE(cc, bins.lower(b));
    EXPECT_LT(cc, bins.upper(b));
    prev = b;
  }
}

}  // namespace
}  // namespace lsadapt
