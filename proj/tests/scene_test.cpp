#include "capaa/scene.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "capaa/error.hpp"

namespace capaa::scene {
namespace {

constexpr int kSize = 32;

Scene test_scene(int label = 0, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  return make_scene(label, kSize, rng);
}

RenderOptions noiseless() {
  RenderOptions opt;
  opt.noise_sigma = 0.0;
  return opt;
}

TEST(Render, BlackProjectionShowsAmbientOnly) {
  const Scene s = test_scene();
  const Pose original = pose_set(kSize, kSize)[0];
  const CapturedImage img = render(RgbImage::filled(kSize, kSize, 0, 0, 0), s, original, 7, noiseless());
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < kSize; ++y)
      for (int x = 0; x < kSize; ++x)
        ASSERT_NEAR(img(c, y, x), std::pow(s.albedo(c, y, x) * s.ambient[c], 1.0 / 2.2), 1e-12);
}

TEST(Render, SameSeedIsBitIdentical) {
  const Scene s = test_scene(3);
  for (const Pose& g : pose_set(kSize, kSize)) {
    const CapturedImage a = render(gray_pattern(kSize, kSize), s, g, 42);
    const CapturedImage b = render(gray_pattern(kSize, kSize), s, g, 42);
    ASSERT_EQ(a.tensor().storage(), b.tensor().storage()) << g.id;
  }
  const CapturedImage c = render(gray_pattern(kSize, kSize), s, pose_set(kSize, kSize)[0], 43);
  EXPECT_NE(c.tensor().storage(), render(gray_pattern(kSize, kSize), s, pose_set(kSize, kSize)[0], 42).tensor().storage());
}

TEST(Render, RejectsSingularHomography) {
  Pose bad;
  bad.id = "bad";
  bad.homography = Eigen::Matrix3d::Zero();
  EXPECT_THROW(render(gray_pattern(kSize, kSize), test_scene(), bad, 1), Error);
}

TEST(Render, BrighterLightNeverDarkensLitPixels) {
  const Scene s = test_scene(6);
  RenderOptions opt = noiseless();
  std::mt19937_64 rng(5);
  for (const Pose& g : pose_set(kSize, kSize)) {
    const ProjectorImage x = random_pattern(3, kSize, kSize, rng);
    Tensor brighter = x.tensor();
    for (double& v : brighter.values()) v = std::min(1.0, v + 0.1);
    const CapturedImage a = render(x, s, g, 1, opt);
    const CapturedImage b = render(RgbImage(brighter), s, g, 1, opt);
    const Tensor lit = direct_light_mask(s, g, opt);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < kSize; ++y)
        for (int xx = 0; xx < kSize; ++xx)
          if (lit.at(0, y, xx) > 0.5) ASSERT_GE(b(c, y, xx), a(c, y, xx) - 1e-12);
  }
}

TEST(Render, PoseChangePreservesObjectValues) {
  // Identity photometry and no noise: object pixels seen at another pose must
  // carry the original-pose values up to interpolation error.
  const Scene s = test_scene(1);
  RenderOptions opt = noiseless();
  opt.mixing = Eigen::Matrix3d::Identity();
  opt.gamma = 1.0;
  const auto poses = pose_set(kSize, kSize);
  const CapturedImage base = render(gray_pattern(kSize, kSize), s, poses[0], 0, opt);
  for (const Pose& g : poses) {
    const CapturedImage img = render(gray_pattern(kSize, kSize), s, g, 0, opt);
    const PoseGeometry geo = pose_geometry(s, g, opt);
    double err = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < geo.surface.size(); ++i) {
      if (geo.surface[i] != Surface::kObject) continue;
      const int sx = std::clamp(static_cast<int>(std::lround(geo.source[i].x())), 0, kSize - 1);
      const int sy = std::clamp(static_cast<int>(std::lround(geo.source[i].y())), 0, kSize - 1);
      const int y = static_cast<int>(i) / kSize;
      const int x = static_cast<int>(i) % kSize;
      for (int c = 0; c < 3; ++c) err += std::abs(img(c, y, x) - base(c, sy, sx));
      n += 3;
    }
    ASSERT_GT(n, 0);
    EXPECT_LT(err / n, 0.02) << g.id;
  }
}

TEST(PoseSet, SevenPosesWithIdentityOriginal) {
  const auto poses = pose_set(kSize, kSize);
  ASSERT_EQ(poses.size(), 7u);
  EXPECT_TRUE(poses[0].homography.isApprox(Eigen::Matrix3d::Identity()));
  std::set<std::string> ids;
  for (const Pose& p : poses) {
    ids.insert(p.id);
    EXPECT_GT(std::abs(p.homography.determinant()), 1e-6);
  }
  EXPECT_EQ(ids.size(), 7u);
}

TEST(PoseSet, OppositeRotationsInvert) {
  const Pose plus = rotation_pose(15.0, kSize, kSize);
  const Pose minus = rotation_pose(-15.0, kSize, kSize);
  const Eigen::Matrix2d product = plus.homography.topLeftCorner<2, 2>() * minus.homography.topLeftCorner<2, 2>();
  EXPECT_TRUE(product.isApprox(Eigen::Matrix2d::Identity(), 1e-12));
  EXPECT_NEAR(find_pose(pose_set(kSize, kSize), "zoom1.10").zoom, 1.1, 1e-12);
  EXPECT_THROW(find_pose(pose_set(kSize, kSize), "nope"), Error);
}

TEST(DirectLightMask, CoversFrameAtOriginalPose) {
  const Scene s = test_scene();
  const Tensor m = direct_light_mask(s, pose_set(kSize, kSize)[0]);
  EXPECT_GE(m.sum() / static_cast<double>(m.size()), 0.95);
  for (double v : m.values()) EXPECT_TRUE(v == 0.0 || v == 1.0);
}

TEST(DirectLightMask, ShadowedPixelsAreDarkAtSteepRotation) {
  const Scene s = test_scene(2);
  const Pose g = rotation_pose(30.0, kSize, kSize);
  const PoseGeometry geo = pose_geometry(s, g);
  const Tensor m = direct_light_mask(s, g);
  int shadow = 0;
  for (std::size_t i = 0; i < geo.surface.size(); ++i) {
    if (geo.surface[i] == Surface::kShadow || geo.surface[i] == Surface::kOutside) {
      EXPECT_EQ(m[i], 0.0);
      shadow += geo.surface[i] == Surface::kShadow;
    }
  }
  EXPECT_GT(shadow, 0);
}

TEST(CaptureDataset, CountRangeAndGrayFirst) {
  const Scene s = test_scene(4);
  const Pose g = pose_set(kSize, kSize)[0];
  EXPECT_EQ(capture_dataset(s, g, 1, 3).size(), 1u);
  const auto samples = capture_dataset(s, g, 12, 3);
  ASSERT_EQ(samples.size(), 12u);
  EXPECT_EQ(samples[0].projector_input.tensor().storage(), gray_pattern(kSize, kSize).tensor().storage());
  for (const auto& sample : samples) {
    EXPECT_EQ(sample.pose_id, "original");
    EXPECT_GE(sample.captured.tensor().min(), 0.0);
    EXPECT_LE(sample.captured.tensor().max(), 1.0);
  }
  EXPECT_THROW(capture_dataset(s, g, 0, 3), Error);
}

TEST(MakeScene, AllClassesRespectCoverageBounds) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial)
    for (int label = 0; label < kNumClasses; ++label) {
      const Scene s = make_scene(label, kSize, rng);
      EXPECT_GE(s.mask_coverage(), 0.10);
      EXPECT_LE(s.mask_coverage(), 0.60);
      EXPECT_EQ(s.label, label);
    }
}

TEST(SceneIo, RoundTrip) {
  const Scene s = test_scene(7);
  const auto dir = std::filesystem::temp_directory_path() / "capaa_scene_io_test";
  std::filesystem::remove_all(dir);
  save_scene(s, dir);
  const Scene t = load_scene(dir);
  EXPECT_EQ(t.albedo.tensor().storage(), s.albedo.tensor().storage());
  EXPECT_EQ(t.object_mask.storage(), s.object_mask.storage());
  EXPECT_EQ(t.label, s.label);
  EXPECT_EQ(t.ambient, s.ambient);
  std::filesystem::remove(dir / "depth.png");
  try {
    load_scene(dir);
    FAIL() << "expected missing file error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("depth.png"), std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace capaa::scene
