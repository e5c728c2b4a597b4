#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "capaa/image.hpp"

namespace capaa::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (double& v : t.values()) v = u(rng);
  return t;
}

inline RgbImage random_image(int h, int w, std::mt19937_64& rng, double lo = 0.05, double hi = 0.95) {
  return RgbImage(random_tensor({3, h, w}, rng, lo, hi));
}

/// Central finite difference of f at coordinate i of x.
inline double central_difference(const std::function<double(const Tensor&)>& f, Tensor x, std::size_t i,
                                 double step = 1e-5) {
  const double orig = x[i];
  x[i] = orig + step;
  const double up = f(x);
  x[i] = orig - step;
  const double down = f(x);
  return (up - down) / (2 * step);
}

/// Relative error with an absolute floor so near-zero derivatives compare sanely.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

}  // namespace capaa::testing
