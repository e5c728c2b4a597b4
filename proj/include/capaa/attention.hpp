#pragma once

#include <string>
#include <utility>
#include <vector>

#include "capaa/surrogate.hpp"
#include "capaa/zoo.hpp"

namespace capaa::attention {

/// Grad-CAM++ map (1,H,W) of class `cls` at image resolution, min-max
/// normalized to [0,1]. A map with no positive evidence is returned as zeros.
/// Throws "zero_gradient" when the class score has no gradient at the
/// feature layer.
Tensor grad_cam_pp(const zoo::Classifier& f, const CapturedImage& image, int cls);

/// Grad-CAM++ for the classifier's own top-1 class on `image`.
Tensor grad_cam_pp(const zoo::Classifier& f, const CapturedImage& image);

struct PerturbationAttentionMap {
  Tensor weights;  // (1,H,W) in [0,1], max 1
  std::vector<std::pair<std::string, double>> source;  // classifier id, mu

  /// Spreads the map over three channels for gating projector gradients.
  Tensor expanded() const;
};

/// All-ones map, used by the variants without attention.
PerturbationAttentionMap uniform_pam(int height, int width);

/// Weighted CAM fusion. Empty `mu` means 1/N each. When a surrogate is given
/// the fused map is moved from the camera frame to the projector frame
/// through the inverse of its learned warp. The result is rescaled to max 1.
PerturbationAttentionMap build_pam(const std::vector<Tensor>& cams, std::vector<double> mu = {},
                                   const surrogate::SurrogateModel* surrogate = nullptr,
                                   const std::vector<std::string>& ids = {});

}  // namespace capaa::attention
