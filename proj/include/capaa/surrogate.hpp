#pragma once

// Differentiable project-and-capture surrogate.
//
// Two branches: a coarse displacement grid, upsampled bilinearly, warps the
// projector image into the camera frame; a small convolutional network maps
// the warped image, together with the gray-light capture, to the captured
// colours.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "capaa/autodiff.hpp"
#include "capaa/nn.hpp"
#include "capaa/scene.hpp"

namespace capaa::surrogate {

struct TrainOptions {
  int epochs = 200;
  double learning_rate = 1e-3;
  int batch_size = 8;
  double validation_fraction = 0.1;
  int grid_size = 4;
  int hidden = 16;
};

struct TrainLog {
  std::vector<double> train_loss;  // per epoch, mean over the training split
  std::vector<double> val_loss;
  int best_epoch = -1;
  double best_val_loss = 0.0;
};

class SurrogateModel {
 public:
  const std::string& pose_id() const { return pose_id_; }
  std::uint64_t seed() const { return seed_; }
  const TrainLog& log() const { return log_; }
  int height() const { return gray_.height(); }
  int width() const { return gray_.width(); }
  const Tensor& gray_capture() const { return gray_; }

  /// Differentiable prediction; x is (3,H,W) in projector space.
  ad::Var infer(const ad::Var& x) const;
  CapturedImage infer(const ProjectorImage& x) const;

  /// Sampling grid (2,H,W): camera pixel -> projector coordinate.
  Tensor sampling_grid() const;
  /// Maps a camera-space single-channel map into projector space through the
  /// inverse of the learned warp.
  Tensor camera_to_projector(const Tensor& map) const;

  /// L1 + (1 - SSIM)/2 against a captured image.
  double loss(const ProjectorImage& x, const CapturedImage& captured) const;

  void save(const std::filesystem::path& path) const;
  static SurrogateModel load(const std::filesystem::path& path);

 private:
  friend SurrogateModel train_surrogate(const std::vector<scene::CaptureSample>&, const TrainOptions&,
                                        std::uint64_t);

  ad::Var forward(const ad::Var& x, const ad::Var& displacement, std::span<const ad::Var> shade) const;

  std::string pose_id_;
  std::uint64_t seed_ = 0;
  TrainLog log_;
  Tensor gray_;
  Tensor displacement_;  // (2,g,g) in pixels
  nn::Network shade_;
};

/// Fits a surrogate to captures from one pose. Requires at least 32 samples,
/// one of which is the plain gray pattern.
SurrogateModel train_surrogate(const std::vector<scene::CaptureSample>& samples, const TrainOptions& options,
                               std::uint64_t seed);

}  // namespace capaa::surrogate
