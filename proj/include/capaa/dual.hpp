#pragma once

#include <array>
#include <cmath>

namespace capaa {

/// Forward-mode dual number with N tangent directions. Used to differentiate
/// small per-pixel scalar functions (color conversions, CIEDE2000) exactly.
template <int N>
struct Dual {
  double v = 0.0;
  std::array<double, N> d{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit lift of constants
  static Dual variable(double value, int direction) {
    Dual r(value);
    r.d[direction] = 1.0;
    return r;
  }
};

template <int N>
Dual<N> make_dual(double v, const std::array<double, N>& d) {
  Dual<N> r(v);
  r.d = d;
  return r;
}

template <int N>
Dual<N> operator+(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r(a.v + b.v);
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] + b.d[i];
  return r;
}
template <int N>
Dual<N> operator-(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r(a.v - b.v);
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] - b.d[i];
  return r;
}
template <int N>
Dual<N> operator-(const Dual<N>& a) {
  Dual<N> r(-a.v);
  for (int i = 0; i < N; ++i) r.d[i] = -a.d[i];
  return r;
}
template <int N>
Dual<N> operator*(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r(a.v * b.v);
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
  return r;
}
template <int N>
Dual<N> operator/(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r(a.v / b.v);
  for (int i = 0; i < N; ++i) r.d[i] = (a.d[i] * b.v - a.v * b.d[i]) / (b.v * b.v);
  return r;
}
template <int N> Dual<N> operator+(const Dual<N>& a, double b) { return a + Dual<N>(b); }
template <int N> Dual<N> operator+(double a, const Dual<N>& b) { return Dual<N>(a) + b; }
template <int N> Dual<N> operator-(const Dual<N>& a, double b) { return a - Dual<N>(b); }
template <int N> Dual<N> operator-(double a, const Dual<N>& b) { return Dual<N>(a) - b; }
template <int N> Dual<N> operator*(const Dual<N>& a, double b) { return a * Dual<N>(b); }
template <int N> Dual<N> operator*(double a, const Dual<N>& b) { return Dual<N>(a) * b; }
template <int N> Dual<N> operator/(const Dual<N>& a, double b) { return a / Dual<N>(b); }
template <int N> Dual<N> operator/(double a, const Dual<N>& b) { return Dual<N>(a) / b; }

template <int N> bool operator<(const Dual<N>& a, const Dual<N>& b) { return a.v < b.v; }
template <int N> bool operator>(const Dual<N>& a, const Dual<N>& b) { return a.v > b.v; }
template <int N> bool operator<=(const Dual<N>& a, const Dual<N>& b) { return a.v <= b.v; }
template <int N> bool operator>=(const Dual<N>& a, const Dual<N>& b) { return a.v >= b.v; }

namespace detail {
template <int N>
Dual<N> chain(const Dual<N>& a, double value, double derivative) {
  Dual<N> r(value);
  for (int i = 0; i < N; ++i) r.d[i] = derivative * a.d[i];
  return r;
}
}  // namespace detail

/// sqrt with a zero derivative at the origin instead of an infinite one.
template <int N>
Dual<N> sqrt(const Dual<N>& a) {
  const double s = std::sqrt(a.v);
  return detail::chain(a, s, s > 0.0 ? 0.5 / s : 0.0);
}
template <int N>
Dual<N> pow(const Dual<N>& a, double p) {
  const double v = std::pow(a.v, p);
  return detail::chain(a, v, a.v != 0.0 ? p * std::pow(a.v, p - 1.0) : 0.0);
}
template <int N>
Dual<N> cbrt(const Dual<N>& a) {
  const double v = std::cbrt(a.v);
  return detail::chain(a, v, v != 0.0 ? 1.0 / (3.0 * v * v) : 0.0);
}
template <int N>
Dual<N> exp(const Dual<N>& a) {
  const double v = std::exp(a.v);
  return detail::chain(a, v, v);
}
template <int N>
Dual<N> sin(const Dual<N>& a) {
  return detail::chain(a, std::sin(a.v), std::cos(a.v));
}
template <int N>
Dual<N> cos(const Dual<N>& a) {
  return detail::chain(a, std::cos(a.v), -std::sin(a.v));
}
template <int N>
Dual<N> abs(const Dual<N>& a) {
  return a.v < 0.0 ? -a : a;
}
template <int N>
Dual<N> atan2(const Dual<N>& y, const Dual<N>& x) {
  Dual<N> r(std::atan2(y.v, x.v));
  const double den = x.v * x.v + y.v * y.v;
  for (int i = 0; i < N; ++i) r.d[i] = den > 0.0 ? (x.v * y.d[i] - y.v * x.d[i]) / den : 0.0;
  return r;
}

inline double value_of(double x) { return x; }
template <int N>
double value_of(const Dual<N>& x) {
  return x.v;
}

}  // namespace capaa
