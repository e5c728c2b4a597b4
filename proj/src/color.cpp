#include "capaa/color.hpp"

#include <algorithm>

#include "capaa/error.hpp"

namespace capaa::color {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!(a.shape() == b.shape())) {
    throw Error("incompatible_images", std::string(op) + ": " + a.shape().str() + " vs " + b.shape().str());
  }
}

Lab<double> lab_at(const Tensor& rgb, std::size_t p, std::size_t plane) {
  return rgb_to_lab(rgb[p], rgb[plane + p], rgb[2 * plane + p]);
}

}  // namespace

LabImage rgb_to_lab(const RgbImage& img) {
  const Tensor& t = img.tensor();
  const std::size_t plane = static_cast<std::size_t>(t.height()) * t.width();
  Tensor out(t.shape());
  for (std::size_t p = 0; p < plane; ++p) {
    const Lab<double> lab = lab_at(t, p, plane);
    out[p] = lab.l;
    out[plane + p] = lab.a;
    out[2 * plane + p] = lab.b;
  }
  return LabImage(std::move(out));
}

double mean_delta_e(const RgbImage& a, const RgbImage& b) {
  return mean_delta_e(a, b, make_map(a.height(), a.width(), 1.0));
}

double mean_delta_e(const RgbImage& a, const RgbImage& b, const Tensor& mask) {
  require_same_shape(a.tensor(), b.tensor(), "mean_delta_e");
  const std::size_t plane = static_cast<std::size_t>(a.height()) * a.width();
  if (mask.size() != plane) throw Error("incompatible_images", "mean_delta_e: mask shape " + mask.shape().str());
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < plane; ++p) {
    if (mask[p] <= 0.5) continue;
    total += ciede2000(lab_at(a.tensor(), p, plane), lab_at(b.tensor(), p, plane));
    ++count;
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

ad::Var mean_delta_e(const ad::Var& a, const Tensor& reference) {
  require_same_shape(a.value(), reference, "mean_delta_e");
  if (a.shape().c != 3) throw Error("incompatible_images", "mean_delta_e expects 3 channels");
  const Tensor& av = a.value();
  const std::size_t plane = static_cast<std::size_t>(av.height()) * av.width();
  const double inv = 1.0 / static_cast<double>(plane);
  Tensor local_grad(av.shape());
  double total = 0.0;
  for (std::size_t p = 0; p < plane; ++p) {
    using D = Dual<3>;
    const Lab<D> la = rgb_to_lab(D::variable(av[p], 0), D::variable(av[plane + p], 1), D::variable(av[2 * plane + p], 2));
    const Lab<double> lr = lab_at(reference, p, plane);
    const D de = ciede2000(la, Lab<D>{D(lr.l), D(lr.a), D(lr.b)});
    total += de.v;
    for (int c = 0; c < 3; ++c) local_grad[c * plane + p] = de.d[c] * inv;
  }
  return ad::make_op(Tensor({1, 1, 1}, total * inv), {a}, [local_grad = std::move(local_grad)](ad::Node& n) {
    Tensor& g = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0] * local_grad[i];
  });
}

std::vector<double> ssim_window(int height, int width) {
  int size = std::min({11, height, width});
  if (size % 2 == 0) --size;
  std::vector<double> k(size);
  const double sigma = 1.5;
  const int half = size / 2;
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - half;
    k[i] = std::exp(-d * d / (2 * sigma * sigma));
    total += k[i];
  }
  for (double& v : k) v /= total;
  return k;
}

namespace {
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
}  // namespace

ad::Var ssim(const ad::Var& a, const Tensor& reference) {
  require_same_shape(a.value(), reference, "ssim");
  const std::vector<double> k = ssim_window(reference.height(), reference.width());
  const ad::Var b = ad::constant(reference);
  const ad::Var mu_a = ad::filter_valid(a, k);
  const ad::Var mu_b = ad::filter_valid(b, k);
  const ad::Var mu_a2 = ad::square(mu_a);
  const ad::Var mu_b2 = ad::square(mu_b);
  const ad::Var mu_ab = mu_a * mu_b;
  const ad::Var var_a = ad::filter_valid(ad::square(a), k) - mu_a2;
  const ad::Var var_b = ad::filter_valid(ad::square(b), k) - mu_b2;
  const ad::Var cov = ad::filter_valid(a * b, k) - mu_ab;
  const ad::Var num = ad::add_scalar(ad::scale(mu_ab, 2.0), kC1) * ad::add_scalar(ad::scale(cov, 2.0), kC2);
  const ad::Var den = ad::add_scalar(mu_a2 + mu_b2, kC1) * ad::add_scalar(var_a + var_b, kC2);
  return ad::mean(ad::div(num, den));
}

double ssim(const RgbImage& a, const RgbImage& b) {
  require_same_shape(a.tensor(), b.tensor(), "ssim");
  return ssim(ad::constant(a.tensor()), b.tensor()).item();
}

LpNorms lp_norms(const RgbImage& a, const RgbImage& b) {
  require_same_shape(a.tensor(), b.tensor(), "lp_norms");
  const std::size_t plane = static_cast<std::size_t>(a.height()) * a.width();
  LpNorms out;
  double total = 0.0;
  for (std::size_t p = 0; p < plane; ++p) {
    double sq = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double d = a.tensor()[c * plane + p] - b.tensor()[c * plane + p];
      sq += d * d;
      out.l_inf = std::max(out.l_inf, std::abs(d));
    }
    total += std::sqrt(sq);
  }
  out.l2 = total / static_cast<double>(plane) * 255.0;
  out.l_inf *= 255.0;
  return out;
}

StealthinessReport stealthiness(const RgbImage& a, const RgbImage& b) {
  const LpNorms lp = lp_norms(a, b);
  return {mean_delta_e(a, b), lp.l2, lp.l_inf, ssim(a, b)};
}

}  // namespace capaa::color
