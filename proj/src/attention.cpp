#include "capaa/attention.hpp"

#include <algorithm>

#include "capaa/error.hpp"

namespace capaa::attention {

Tensor grad_cam_pp(const zoo::Classifier& f, const CapturedImage& image, int cls) {
  if (cls < 0 || cls >= f.num_classes()) throw Error("invalid_class", "class " + std::to_string(cls) + " out of range");
  const zoo::Classifier::Trace t = f.trace(ad::constant(image.tensor()));
  // Differentiate the class score with respect to the feature maps by
  // re-rooting them as a leaf: run the remaining layers from a parameter copy.
  const ad::Var features = t.features;
  if (!features) throw Error("no_feature_layer", f.arch_id() + " exposes no feature layer");
  const nn::Network& net = f.network();
  const auto& layers = net.layers();
  std::vector<nn::Layer> head(layers.begin() + net.feature_layer() + 1, layers.end());
  std::size_t skip = 0;
  for (int i = 0; i <= net.feature_layer(); ++i) skip += layers[static_cast<std::size_t>(i)].has_params() ? 2 : 0;
  nn::Network tail(head);
  for (std::size_t k = 0; k < tail.params().size(); ++k) tail.params()[k] = net.params()[skip + k];
  const ad::Var a = ad::parameter(features.value());
  ad::backward(ad::select(tail.forward(a).out, cls));
  const Tensor g = a.grad();
  const Tensor& act = a.value();
  if (g.squared_norm() == 0.0) throw Error("zero_gradient", "class score has zero gradient at the feature layer");

  const int k_maps = act.channels();
  const std::size_t plane = static_cast<std::size_t>(act.height()) * act.width();
  Tensor cam(Shape{1, act.height(), act.width()});
  for (int k = 0; k < k_maps; ++k) {
    const auto ak = act.plane(k);
    const auto gk = g.plane(k);
    double sum_a = 0.0;
    for (double v : ak) sum_a += v;
    double weight = 0.0;
    for (std::size_t p = 0; p < plane; ++p) {
      const double g2 = gk[p] * gk[p];
      const double denom = 2.0 * g2 + sum_a * g2 * gk[p];
      const double alpha = gk[p] != 0.0 && denom != 0.0 ? g2 / denom : 0.0;
      weight += std::max(gk[p], 0.0) * alpha;
    }
    for (std::size_t p = 0; p < plane; ++p) cam[p] += weight * ak[p];
  }
  for (double& v : cam.values()) v = std::max(v, 0.0);
  Tensor up = resize_bilinear(cam, image.height(), image.width());
  const double lo = up.min();
  const double hi = up.max();
  if (hi - lo <= 1e-12) {
    up.fill(0.0);
    return up;
  }
  for (double& v : up.values()) v = (v - lo) / (hi - lo);
  return up;
}

Tensor grad_cam_pp(const zoo::Classifier& f, const CapturedImage& image) {
  return grad_cam_pp(f, image, f.predict(image).top1);
}

Tensor PerturbationAttentionMap::expanded() const {
  Tensor out(Shape{3, weights.height(), weights.width()});
  for (int c = 0; c < 3; ++c) std::copy(weights.values().begin(), weights.values().end(), out.plane(c).begin());
  return out;
}

PerturbationAttentionMap uniform_pam(int height, int width) {
  return {Tensor(Shape{1, height, width}, 1.0), {}};
}

PerturbationAttentionMap build_pam(const std::vector<Tensor>& cams, std::vector<double> mu,
                                   const surrogate::SurrogateModel* surrogate, const std::vector<std::string>& ids) {
  if (cams.empty()) throw Error("invalid_argument", "build_pam needs at least one CAM");
  if (mu.empty()) mu.assign(cams.size(), 1.0 / static_cast<double>(cams.size()));
  if (mu.size() != cams.size()) throw Error("invalid_argument", "mu must have one weight per CAM");
  if (!ids.empty() && ids.size() != cams.size()) throw Error("invalid_argument", "ids must have one entry per CAM");
  Tensor fused(Shape{1, cams[0].height(), cams[0].width()});
  for (std::size_t k = 0; k < cams.size(); ++k) {
    if (cams[k].shape() != fused.shape()) throw Error("shape_mismatch", "CAMs differ in shape");
    if (mu[k] < 0.0) throw Error("invalid_argument", "mu must be non-negative");
    for (std::size_t i = 0; i < fused.size(); ++i) fused[i] += mu[k] * cams[k][i];
  }
  if (surrogate) fused = surrogate->camera_to_projector(fused);
  const double hi = fused.max();
  if (hi <= 0.0) throw Error("zero_pam", "perturbation attention map is identically zero");
  fused *= 1.0 / hi;
  PerturbationAttentionMap pam{std::move(fused), {}};
  for (std::size_t k = 0; k < cams.size(); ++k) pam.source.emplace_back(ids.empty() ? std::to_string(k) : ids[k], mu[k]);
  return pam;
}

}  // namespace capaa::attention
