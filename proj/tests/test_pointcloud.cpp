#include <gtest/gtest.h>

#include <sstream>

#include "pcfuse/pointcloud.hpp"
#include "test_support.hpp"

using namespace pcfuse;
using pcfuse::test::Rng;

namespace {

// 5x5 camera with the principal point at pixel (2, 2).
struct Scene {
  CameraIntrinsics k = pcfuse::test::small_camera(5, 5, 4.0);
  CameraPose pose;
  Image depth = constant_image(5, 5, 4.0);
  Image color = Image(5, 5, 3, 0.8);
  Image alpha = constant_image(5, 5, 0.0);
  Image beta = constant_image(5, 5, 1.0);
  Image gamma = constant_image(5, 5, 3.0);

  UpdateResult update(GlobalPointCloud& cloud) const {
    return update_points(cloud, unproject(depth, k, pose), color, alpha, beta, gamma, pose, k);
  }
};

}  // namespace

TEST(UpdatePoints, WeightedExample) {
  Scene s;
  GlobalPointCloud cloud;
  cloud.add({0, 0, 2}, {0.0, 0.0, 0.0}, 1.0);
  const UpdateResult r = s.update(cloud);
  EXPECT_EQ(r.updated, 1u);
  EXPECT_EQ(r.visibility[0], PointVisibility::updated);
  EXPECT_DOUBLE_EQ(cloud.positions()[0].z(), 3.5);
  EXPECT_DOUBLE_EQ(cloud.positions()[0].x(), 0.0);
  EXPECT_DOUBLE_EQ(cloud.colors()[0].x(), 0.6);
  EXPECT_DOUBLE_EQ(cloud.confidence()[0], 4.0);
}

TEST(UpdatePoints, ZeroGammaKeepsPoint) {
  Scene s;
  s.gamma.fill(0.0);
  s.beta.fill(0.7);
  GlobalPointCloud cloud;
  cloud.add({0.1, -0.2, 2}, {0.1, 0.2, 0.3}, 5.0);
  const GlobalPointCloud before = cloud;
  s.update(cloud);
  for (int c = 0; c < 3; ++c) {
    EXPECT_DOUBLE_EQ(cloud.positions()[0][c], before.positions()[0][c]);
    EXPECT_DOUBLE_EQ(cloud.colors()[0][c], before.colors()[0][c]);
  }
  EXPECT_DOUBLE_EQ(cloud.confidence()[0], 0.7);
}

TEST(UpdatePoints, ZeroBetaSnapsToObservation) {
  Scene s;
  s.beta.fill(0.0);
  s.gamma.fill(0.25);
  GlobalPointCloud cloud;
  cloud.add({0, 0, 2}, {0.1, 0.2, 0.3}, 5.0);
  s.update(cloud);
  EXPECT_DOUBLE_EQ(cloud.positions()[0].z(), 4.0);
  EXPECT_DOUBLE_EQ(cloud.colors()[0].y(), 0.8);
  EXPECT_DOUBLE_EQ(cloud.confidence()[0], 0.25);
}

TEST(UpdatePoints, DynamicPixelCountsAsOccluded) {
  Scene s;
  s.alpha.fill(0.9);
  GlobalPointCloud cloud;
  cloud.add({0, 0, 2}, {0, 0, 0}, 2.0);
  const UpdateResult r = s.update(cloud);
  EXPECT_EQ(r.visibility[0], PointVisibility::occluded);
  EXPECT_EQ(decay_unobserved(cloud, r.visibility), 1u);
  EXPECT_DOUBLE_EQ(cloud.confidence()[0], 1.0);
  EXPECT_DOUBLE_EQ(cloud.positions()[0].z(), 2.0);
}

TEST(UpdatePoints, BehindCameraDecays) {
  Scene s;
  GlobalPointCloud cloud;
  cloud.add({0, 0, -1}, {0, 0, 0}, 2.0);
  cloud.add({50, 0, 1}, {0, 0, 0}, 2.0);  // far outside the image
  const UpdateResult r = s.update(cloud);
  EXPECT_EQ(r.out_of_view, 2u);
  decay_unobserved(cloud, r.visibility);
  EXPECT_DOUBLE_EQ(cloud.confidence()[0], 1.0);
  EXPECT_DOUBLE_EQ(cloud.confidence()[1], 1.0);
}

TEST(UpdatePoints, HoleSampleCountsAsOccluded) {
  Scene s;
  s.depth(2, 2) = kHole;
  GlobalPointCloud cloud;
  cloud.add({0, 0, 2}, {0, 0, 0}, 2.0);
  EXPECT_EQ(s.update(cloud).visibility[0], PointVisibility::occluded);
  EXPECT_DOUBLE_EQ(cloud.confidence()[0], 2.0);
}

TEST(UpdatePoints, PositionStaysOnSegment) {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    Scene s;
    s.depth = pcfuse::test::random_image(rng, 5, 5, 1, 1, 5);
    s.beta = pcfuse::test::random_image(rng, 5, 5, 1, 0, 2);
    s.gamma = pcfuse::test::random_image(rng, 5, 5, 1, 0.01, 2);
    GlobalPointCloud cloud = pcfuse::test::random_cloud(rng, 30);
    const GlobalPointCloud before = cloud;
    const PointBuffer z = unproject(s.depth, s.k, s.pose);
    const UpdateResult r = update_points(cloud, z, s.color, s.alpha, s.beta, s.gamma, s.pose, s.k);
    EXPECT_EQ(r.updated + r.occluded + r.out_of_view, cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      if (r.visibility[i] != PointVisibility::updated) {
        EXPECT_EQ(cloud.positions()[i], before.positions()[i]);
        continue;
      }
      const auto proj = project_point(before.positions()[i], s.pose, s.k);
      const Eigen::Vector3d target = *bilinear_sample(z, proj.pixel.x(), proj.pixel.y());
      const Eigen::Vector3d seg = target - before.positions()[i];
      const Eigen::Vector3d off = cloud.positions()[i] - before.positions()[i];
      const double t = seg.squaredNorm() > 0 ? off.dot(seg) / seg.squaredNorm() : 0.0;
      EXPECT_GE(t, -1e-12);
      EXPECT_LE(t, 1 + 1e-12);
      EXPECT_NEAR((off - t * seg).norm(), 0.0, 1e-9);
      const double b = *bilinear_sample(s.beta, proj.pixel.x(), proj.pixel.y());
      const double g = *bilinear_sample(s.gamma, proj.pixel.x(), proj.pixel.y());
      EXPECT_EQ(cloud.confidence()[i], b + g);
    }
  }
}

TEST(DecayAndPrune, TwiceUnobservedThenPruned) {
  GlobalPointCloud cloud;
  cloud.add({0, 0, 1}, {0, 0, 0}, 0.5);
  const std::vector<PointVisibility> unseen{PointVisibility::out_of_view};
  decay_unobserved(cloud, unseen);
  decay_unobserved(cloud, unseen);
  EXPECT_DOUBLE_EQ(cloud.confidence()[0], -1.5);
  EXPECT_EQ(prune(cloud, kDefaultPruneEpsilon), 1u);
  EXPECT_TRUE(cloud.empty());
}

TEST(DecayAndPrune, BoundaryOfEpsilon) {
  GlobalPointCloud cloud;
  cloud.add({0, 0, 1}, {0, 0, 0}, 0.03);
  cloud.add({0, 0, 2}, {0, 0, 0}, 0.0299);
  cloud.add({0, 0, 3}, {0, 0, 0}, 1.0);
  EXPECT_EQ(kDefaultPruneEpsilon, 0.03);
  EXPECT_EQ(prune(cloud), 1u);
  ASSERT_EQ(cloud.size(), 2u);
  EXPECT_EQ(cloud.ids()[0], 0u);
  EXPECT_EQ(cloud.ids()[1], 2u);
  EXPECT_EQ(prune(cloud), 0u);
}

TEST(DecayAndPrune, SizeMismatchThrows) {
  GlobalPointCloud cloud;
  cloud.add({0, 0, 1}, {0, 0, 0}, 1.0);
  EXPECT_THROW(decay_unobserved(cloud, {}), std::invalid_argument);
}

TEST(InsertPoints, FullMaskInsertsEveryValidPixel) {
  const auto k = pcfuse::test::small_camera(4, 3);
  Image d = constant_image(4, 3, 2.0);
  d(0, 0) = kHole;
  GlobalPointCloud cloud;
  const PointBuffer z = unproject(d, k, CameraPose());
  EXPECT_EQ(insert_points(cloud, z, Image(4, 3, 3, 0.0), constant_image(4, 3, 1.0), constant_image(4, 3, 0.4)), 11u);
  EXPECT_EQ(cloud.size(), 11u);
  EXPECT_EQ(cloud.confidence()[0], 0.4);
  EXPECT_EQ(insert_points(cloud, z, Image(4, 3, 3, 0.0), constant_image(4, 3, 0.0), constant_image(4, 3, 1.0)), 0u);
}

TEST(InsertPoints, CheckerboardInsertsEight) {
  const auto k = pcfuse::test::small_camera(4, 4);
  Image alpha(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) alpha(x, y) = (x + y) % 2 == 0 ? 1.0 : 0.0;
  GlobalPointCloud cloud;
  const PointBuffer z = unproject(constant_image(4, 4, 1.0), k, CameraPose());
  EXPECT_EQ(insert_points(cloud, z, Image(4, 4, 3, 0.0), alpha, constant_image(4, 4, 1.0)), 8u);
  // Row-major order, ids ascending.
  for (std::size_t i = 0; i < cloud.size(); ++i) EXPECT_EQ(cloud.ids()[i], i);
  EXPECT_NEAR(cloud.positions()[0].x(), (0 - k.cx) / k.fx, 1e-15);
  EXPECT_NEAR(cloud.positions()[1].x(), (2 - k.cx) / k.fx, 1e-15);
}

TEST(Integration, MatchesBruteForceReferenceBitForBit) {
  Rng rng(55);
  const auto k = pcfuse::test::small_camera(8, 8, 6.0);
  for (int trial = 0; trial < 20; ++trial) {
    GlobalPointCloud lib = pcfuse::test::random_cloud(rng, 60);
    GlobalPointCloud ref = lib;
    for (int step = 0; step < 4; ++step) {
      const CameraPose pose = pcfuse::test::random_pose(rng, 0.2, 0.2);
      Image depth = pcfuse::test::random_image(rng, 8, 8, 1, 0.5, 4);
      for (double& d : depth.data())
        if (rng.uniform(0, 1) < 0.1) d = kHole;
      const Image color = pcfuse::test::random_image(rng, 8, 8, 3, 0, 1);
      Image alpha(8, 8);
      for (double& a : alpha.data()) a = rng.uniform(0, 1) < 0.3 ? 1.0 : rng.uniform(0, 0.4);
      const Image beta = pcfuse::test::random_image(rng, 8, 8, 1, 0, 2);
      const Image gamma = pcfuse::test::random_image(rng, 8, 8, 1, 0, 2);
      pcfuse::test::library_integrate(lib, depth, color, alpha, beta, gamma, pose, k, kDefaultPruneEpsilon);
      pcfuse::test::reference_integrate(ref, depth, color, alpha, beta, gamma, pose, k, kDefaultPruneEpsilon);
      ASSERT_TRUE(pcfuse::test::same_cloud_bits(lib, ref)) << "trial " << trial << " step " << step;
    }
  }
}

TEST(Integration, PrunedCloudRespectsEpsilon) {
  Rng rng(56);
  const auto k = pcfuse::test::small_camera(6, 6, 5.0);
  GlobalPointCloud cloud = pcfuse::test::random_cloud(rng, 40);
  for (int step = 0; step < 5; ++step) {
    const Image depth = pcfuse::test::random_image(rng, 6, 6, 1, 0.5, 4);
    Image alpha(6, 6);
    for (double& a : alpha.data()) a = rng.uniform(0, 1) < 0.5 ? 1.0 : 0.0;
    pcfuse::test::library_integrate(cloud, depth, Image(6, 6, 3, 0.5), alpha,
                                    pcfuse::test::random_image(rng, 6, 6, 1, 0, 1),
                                    pcfuse::test::random_image(rng, 6, 6, 1, 0, 1), pcfuse::test::random_pose(rng), k,
                                    0.2);
    for (double r : cloud.confidence()) EXPECT_GE(r, 0.2);
    for (std::size_t i = 1; i < cloud.size(); ++i) EXPECT_LT(cloud.ids()[i - 1], cloud.ids()[i]);
  }
}

TEST(Ply, HeaderAndRows) {
  GlobalPointCloud cloud;
  cloud.add({1.5, -2, 3.25}, {1.0, 0.5, 0.0}, 0.75);
  cloud.add({0, 0, 1}, {2.0, -1.0, 0.2}, 4.0);
  std::ostringstream os;
  write_ply(os, cloud);
  std::istringstream is(os.str());
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(is, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 13u);
  EXPECT_EQ(lines[0], "ply");
  EXPECT_EQ(lines[1], "format ascii 1.0");
  EXPECT_EQ(lines[2], "element vertex 2");
  EXPECT_EQ(lines[9], "property float confidence");
  EXPECT_EQ(lines[10], "end_header");
  EXPECT_EQ(lines[11], "1.5 -2 3.25 255 128 0 0.75");
  EXPECT_EQ(lines[12], "0 0 1 255 0 51 4");
}
