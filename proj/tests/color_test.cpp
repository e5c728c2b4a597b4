#include "capaa/color.hpp"

#include <gtest/gtest.h>

#include <random>

#include "capaa/error.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace capaa::color {
namespace {

using capaa::testing::central_difference;
using capaa::testing::random_image;
using capaa::testing::relative_error;

double de(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  return ciede2000(Lab<double>{a[0], a[1], a[2]}, Lab<double>{b[0], b[1], b[2]});
}

TEST(RgbToLab, BlackWhiteAndMidGray) {
  const Lab<double> black = rgb_to_lab(0.0, 0.0, 0.0);
  EXPECT_NEAR(black.l, 0.0, 1e-12);
  EXPECT_NEAR(black.a, 0.0, 1e-12);
  EXPECT_NEAR(black.b, 0.0, 1e-12);

  const Lab<double> white = rgb_to_lab(1.0, 1.0, 1.0);
  EXPECT_NEAR(white.l, 100.0, 1e-3);
  EXPECT_LT(std::abs(white.a), 0.01);
  EXPECT_LT(std::abs(white.b), 0.01);

  // 50% sRGB gray; reference value from an independent sRGB -> Lab conversion.
  const Lab<double> gray = rgb_to_lab(0.5, 0.5, 0.5);
  EXPECT_NEAR(gray.l, 53.3890, 1e-3);
}

TEST(RgbToLab, ImageMatchesPerPixel) {
  std::mt19937_64 rng(3);
  const RgbImage img = random_image(8, 9, rng);
  const LabImage lab = rgb_to_lab(img);
  const Lab<double> p = rgb_to_lab(img(0, 4, 5), img(1, 4, 5), img(2, 4, 5));
  EXPECT_DOUBLE_EQ(lab.at(4, 5).l, p.l);
  EXPECT_DOUBLE_EQ(lab.at(4, 5).b, p.b);
}

TEST(Ciede2000, PublishedPairs) {
  for (const auto& pair : oracle::verification_pairs()) {
    EXPECT_NEAR(de(pair.first, pair.second), pair.expected, 1e-4);
    EXPECT_NEAR(de(pair.second, pair.first), pair.expected, 1e-4);
  }
}

TEST(Ciede2000, MatchesIndependentTranscriptionOnRandomPairs) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> l(0.0, 100.0), ab(-110.0, 110.0);
  for (int i = 0; i < 500; ++i) {
    const std::array<double, 3> a{l(rng), ab(rng), ab(rng)};
    const std::array<double, 3> b{l(rng), ab(rng), ab(rng)};
    EXPECT_NEAR(de(a, b), oracle::ciede2000(a[0], a[1], a[2], b[0], b[1], b[2]), 1e-9);
  }
}

TEST(Ciede2000, SymmetricNonNegativeZeroOnlyAtIdentity) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> l(0.0, 100.0), ab(-80.0, 80.0);
  for (int i = 0; i < 200; ++i) {
    const std::array<double, 3> a{l(rng), ab(rng), ab(rng)};
    const std::array<double, 3> b{l(rng), ab(rng), ab(rng)};
    const double d = de(a, b);
    EXPECT_GE(d, 0.0);
    EXPECT_NEAR(d, de(b, a), 1e-12);
    EXPECT_GT(d, 1e-9);
    EXPECT_NEAR(de(a, a), 0.0, 1e-9);
  }
}

TEST(MeanDeltaE, IdenticalImagesGiveZero) {
  std::mt19937_64 rng(1);
  const RgbImage img = random_image(12, 10, rng);
  EXPECT_DOUBLE_EQ(mean_delta_e(img, img), 0.0);
}

TEST(MeanDeltaE, UniformOffsetEqualsSinglePair) {
  const RgbImage gray = RgbImage::filled(10, 10, 0.5, 0.5, 0.5);
  const RgbImage bright = RgbImage::filled(10, 10, 0.55, 0.5, 0.48);
  const Lab<double> a = rgb_to_lab(0.5, 0.5, 0.5);
  const Lab<double> b = rgb_to_lab(0.55, 0.5, 0.48);
  EXPECT_NEAR(mean_delta_e(gray, bright), oracle::ciede2000(a.l, a.a, a.b, b.l, b.a, b.b), 1e-12);
}

TEST(MeanDeltaE, MonotoneInUniformPerturbation) {
  const RgbImage base = RgbImage::filled(8, 8, 0.4, 0.45, 0.5);
  double previous = 0.0;
  for (double m = 0.0; m <= 0.4; m += 0.02) {
    const double d = mean_delta_e(base, RgbImage::filled(8, 8, 0.4 + m, 0.45 + m, 0.5 + m));
    EXPECT_GE(d, previous);
    previous = d;
  }
}

TEST(MeanDeltaE, ShapeMismatchThrows) {
  EXPECT_THROW(mean_delta_e(RgbImage::filled(8, 8, 0, 0, 0), RgbImage::filled(8, 9, 0, 0, 0)), Error);
}

TEST(MeanDeltaE, MaskRestrictsAverage) {
  Tensor t = RgbImage::filled(8, 8, 0.5, 0.5, 0.5).tensor();
  for (int c = 0; c < 3; ++c) t.at(c, 0, 0) = 0.9;
  Tensor mask = make_map(8, 8, 0.0);
  mask[1] = 1.0;
  EXPECT_DOUBLE_EQ(mean_delta_e(RgbImage(t), RgbImage::filled(8, 8, 0.5, 0.5, 0.5), mask), 0.0);
  EXPECT_GT(mean_delta_e(RgbImage(t), RgbImage::filled(8, 8, 0.5, 0.5, 0.5)), 0.0);
}

TEST(MeanDeltaE, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  const RgbImage a = random_image(9, 9, rng);
  const RgbImage ref = random_image(9, 9, rng);
  const ad::Var x = ad::parameter(a.tensor());
  const ad::Var d = mean_delta_e(x, ref.tensor());
  EXPECT_NEAR(d.item(), mean_delta_e(a, ref), 1e-12);
  ad::backward(d);
  const Tensor grad = x.grad();
  auto f = [&](const Tensor& t) { return mean_delta_e(ad::constant(t), ref.tensor()).item(); };
  std::uniform_int_distribution<std::size_t> pick(0, grad.size() - 1);
  for (int i = 0; i < 30; ++i) {
    const std::size_t k = pick(rng);
    EXPECT_LT(relative_error(grad[k], central_difference(f, a.tensor(), k, 1e-6)), 1e-3) << "coordinate " << k;
  }
}

TEST(Ssim, IdentitySymmetryAndFlip) {
  std::mt19937_64 rng(2);
  const RgbImage a = random_image(16, 16, rng);
  const RgbImage b = random_image(16, 16, rng);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-6);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);

  Tensor bin({3, 16, 16});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) bin.at(c, y, x) = ((x / 2 + y / 2) % 2) ? 1.0 : 0.0;
  Tensor flipped = bin;
  for (double& v : flipped.values()) v = 1.0 - v;
  const RgbImage p(bin), q(flipped);
  EXPECT_LT(ssim(p, q), -0.9);
  const LpNorms lp = lp_norms(p, q);
  EXPECT_DOUBLE_EQ(lp.l_inf, 255.0);
  EXPECT_NEAR(lp.l2, std::sqrt(3.0) * 255.0, 1e-9);
}

TEST(Ssim, SmallImagesUseTruncatedWindow) {
  std::mt19937_64 rng(9);
  const RgbImage a = random_image(8, 8, rng);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-6);
  EXPECT_EQ(ssim_window(8, 8).size(), 7u);
  EXPECT_EQ(ssim_window(32, 32).size(), 11u);
}

TEST(Ssim, DifferentiableFormGradient) {
  std::mt19937_64 rng(8);
  const RgbImage a = random_image(12, 12, rng);
  const RgbImage ref = random_image(12, 12, rng);
  const ad::Var x = ad::parameter(a.tensor());
  const ad::Var s = ssim(x, ref.tensor());
  ad::backward(s);
  auto f = [&](const Tensor& t) { return ssim(ad::constant(t), ref.tensor()).item(); };
  for (std::size_t k : {0ul, 17ul, 200ul, 431ul}) {
    EXPECT_LT(relative_error(x.grad()[k], central_difference(f, a.tensor(), k)), 1e-4);
  }
}

TEST(Stealthiness, ZeroForIdenticalImages) {
  std::mt19937_64 rng(4);
  const RgbImage a = random_image(10, 10, rng);
  const StealthinessReport r = stealthiness(a, a);
  EXPECT_EQ(r.delta_e, 0.0);
  EXPECT_EQ(r.l2, 0.0);
  EXPECT_EQ(r.l_inf, 0.0);
  EXPECT_NEAR(r.ssim, 1.0, 1e-6);
}

}  // namespace
}  // namespace capaa::color
