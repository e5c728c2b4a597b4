#pragma once

#include <filesystem>

#include "capaa/tensor.hpp"

namespace capaa {

/// 3-channel sRGB image with every value in [0,1] and both sides >= 8.
class RgbImage {
 public:
  static constexpr int kMinSide = 8;

  RgbImage() = default;
  /// Validates channel count, size and range.
  explicit RgbImage(Tensor pixels);
  /// Clamps into [0,1] instead of rejecting out-of-range values.
  static RgbImage clipped(Tensor pixels);
  static RgbImage filled(int height, int width, double r, double g, double b);

  const Tensor& tensor() const { return pixels_; }
  int height() const { return pixels_.height(); }
  int width() const { return pixels_.width(); }
  bool empty() const { return pixels_.empty(); }
  double operator()(int c, int y, int x) const { return pixels_.at(c, y, x); }

 private:
  Tensor pixels_;
};

/// Projector input pattern (x, x0, x').
using ProjectorImage = RgbImage;
/// Camera observation (I, Î).
using CapturedImage = RgbImage;

/// Single-channel map helpers.
Tensor make_map(int height, int width, double fill = 0.0);

// 8-bit PNG I/O. Three-channel tensors are written as RGB, one-channel as gray.
void write_png(const std::filesystem::path& path, const Tensor& image);
Tensor read_png(const std::filesystem::path& path);
/// Rounds to the nearest 8-bit level, the precision a PNG round trip keeps.
Tensor quantize8(const Tensor& t);

}  // namespace capaa
