#pragma once

// Perceptual and pixel-space image distances: sRGB -> CIELAB (D65),
// CIEDE2000, mean per-pixel Delta E (with a differentiable form for the
// optimizer), SSIM and the 0-255 scaled Lp norms.

#include <array>
#include <cmath>
#include <numbers>

#include "capaa/autodiff.hpp"
#include "capaa/dual.hpp"
#include "capaa/image.hpp"

namespace capaa::color {

template <typename T>
struct Lab {
  T l;
  T a;
  T b;
};

/// L*a*b* image with the shape of its source RgbImage.
class LabImage {
 public:
  explicit LabImage(Tensor pixels) : pixels_(std::move(pixels)) {}
  const Tensor& tensor() const { return pixels_; }
  Lab<double> at(int y, int x) const { return {pixels_.at(0, y, x), pixels_.at(1, y, x), pixels_.at(2, y, x)}; }

 private:
  Tensor pixels_;
};

inline constexpr std::array<double, 3> kD65White = {0.95047, 1.0, 1.08883};
inline constexpr double kZeroChroma = 1e-12;

template <typename T>
T srgb_to_linear(const T& c) {
  using std::pow;
  if (value_of(c) <= 0.04045) return c / 12.92;
  return pow((c + 0.055) / 1.055, 2.4);
}

template <typename T>
T lab_f(const T& t) {
  using std::cbrt;
  constexpr double delta = 6.0 / 29.0;
  if (value_of(t) > delta * delta * delta) return cbrt(t);
  return t / (3.0 * delta * delta) + 4.0 / 29.0;
}

template <typename T>
Lab<T> rgb_to_lab(const T& r, const T& g, const T& b) {
  const T rl = srgb_to_linear(r);
  const T gl = srgb_to_linear(g);
  const T bl = srgb_to_linear(b);
  const T x = (0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl) / kD65White[0];
  const T y = (0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl) / kD65White[1];
  const T z = (0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl) / kD65White[2];
  const T fx = lab_f(x);
  const T fy = lab_f(y);
  const T fz = lab_f(z);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

/// CIEDE2000 colour difference (kL = kC = kH = 1).
template <typename T>
T ciede2000(const Lab<T>& c1, const Lab<T>& c2) {
  using std::abs;
  using std::atan2;
  using std::cos;
  using std::exp;
  using std::pow;
  using std::sin;
  using std::sqrt;
  constexpr double kDeg = 180.0 / std::numbers::pi;
  constexpr double kRad = std::numbers::pi / 180.0;
  const double pow25_7 = 6103515625.0;  // 25^7

  const T chroma1 = sqrt(c1.a * c1.a + c1.b * c1.b);
  const T chroma2 = sqrt(c2.a * c2.a + c2.b * c2.b);
  const T chroma_mean7 = pow((chroma1 + chroma2) * 0.5, 7.0);
  const T g = 0.5 * (1.0 - sqrt(chroma_mean7 / (chroma_mean7 + pow25_7)));
  const T a1 = (1.0 + g) * c1.a;
  const T a2 = (1.0 + g) * c2.a;
  const T cp1 = sqrt(a1 * a1 + c1.b * c1.b);
  const T cp2 = sqrt(a2 * a2 + c2.b * c2.b);

  auto hue = [&](const T& b, const T& a) {
    if (value_of(a) == 0.0 && value_of(b) == 0.0) return T(0.0);
    T h = atan2(b, a) * kDeg;
    if (value_of(h) < 0.0) h = h + 360.0;
    return h;
  };
  const T hp1 = hue(c1.b, a1);
  const T hp2 = hue(c2.b, a2);

  const T delta_l = c2.l - c1.l;
  const T delta_c = cp2 - cp1;
  const bool achromatic = value_of(cp1) * value_of(cp2) < kZeroChroma;
  T delta_h(0.0);
  if (!achromatic) {
    delta_h = hp2 - hp1;
    if (value_of(delta_h) > 180.0) {
      delta_h = delta_h - 360.0;
    } else if (value_of(delta_h) < -180.0) {
      delta_h = delta_h + 360.0;
    }
  }
  const T delta_big_h = 2.0 * sqrt(cp1 * cp2) * sin(delta_h * (0.5 * kRad));

  const T l_mean = (c1.l + c2.l) * 0.5;
  const T c_mean = (cp1 + cp2) * 0.5;
  T h_mean = hp1 + hp2;
  if (!achromatic) {
    if (abs(value_of(hp1) - value_of(hp2)) <= 180.0) {
      h_mean = h_mean * 0.5;
    } else if (value_of(h_mean) < 360.0) {
      h_mean = (h_mean + 360.0) * 0.5;
    } else {
      h_mean = (h_mean - 360.0) * 0.5;
    }
  }

  const T t = 1.0 - 0.17 * cos((h_mean - 30.0) * kRad) + 0.24 * cos((2.0 * h_mean) * kRad) +
              0.32 * cos((3.0 * h_mean + 6.0) * kRad) - 0.20 * cos((4.0 * h_mean - 63.0) * kRad);
  const T hue_offset = (h_mean - 275.0) / 25.0;
  const T delta_theta = 30.0 * exp(-(hue_offset * hue_offset));
  const T c_mean7 = pow(c_mean, 7.0);
  const T rc = 2.0 * sqrt(c_mean7 / (c_mean7 + pow25_7));
  const T l50 = (l_mean - 50.0) * (l_mean - 50.0);
  const T sl = 1.0 + 0.015 * l50 / sqrt(20.0 + l50);
  const T sc = 1.0 + 0.045 * c_mean;
  const T sh = 1.0 + 0.015 * c_mean * t;
  const T rt = -sin(2.0 * delta_theta * kRad) * rc;

  const T tl = delta_l / sl;
  const T tc = delta_c / sc;
  const T th = delta_big_h / sh;
  T sq = tl * tl + tc * tc + th * th + rt * tc * th;
  if (value_of(sq) < 0.0) sq = T(0.0);
  return sqrt(sq);
}

LabImage rgb_to_lab(const RgbImage& img);

/// Mean per-pixel CIEDE2000 between two same-shaped images.
double mean_delta_e(const RgbImage& a, const RgbImage& b);
/// Mean restricted to pixels where mask > 0.5.
double mean_delta_e(const RgbImage& a, const RgbImage& b, const Tensor& mask);
/// Differentiable mean Delta E of `a` against a fixed reference.
ad::Var mean_delta_e(const ad::Var& a, const Tensor& reference);

/// Gaussian window used by SSIM (11 taps, sigma 1.5, truncated to the image size).
std::vector<double> ssim_window(int height, int width);

/// Channel-averaged SSIM, data range 1.
double ssim(const RgbImage& a, const RgbImage& b);
ad::Var ssim(const ad::Var& a, const Tensor& reference);

struct LpNorms {
  double l2 = 0.0;
  double l_inf = 0.0;
};
/// l2: mean per-pixel RGB Euclidean distance, l_inf: max channel difference; both on the 0-255 scale.
LpNorms lp_norms(const RgbImage& a, const RgbImage& b);

struct StealthinessReport {
  double delta_e = 0.0;
  double l2 = 0.0;
  double l_inf = 0.0;
  double ssim = 1.0;
};
StealthinessReport stealthiness(const RgbImage& a, const RgbImage& b);

}  // namespace capaa::color
