#pragma once

// Ground-truth project-and-capture simulator.
//
// Photometry at the original pose:
//   I0 = clip(gamma(albedo * (ambient + M * mix(x)) + noise))
// Geometry: the camera pose maps original-frame coordinates through a
// homography. Out-of-plane rotation additionally shifts the object layer
// against the background (parallax from the depth proxy); background pixels
// that were behind the object from the projector's point of view are then in
// projector shadow and show the unlit scene.

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "capaa/image.hpp"

namespace capaa::scene {

/// Axis-aligned projector footprint in original-frame pixel coordinates (inclusive).
struct Frustum {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;
  bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

struct Scene {
  std::string id;
  int label = -1;
  RgbImage albedo;
  Tensor object_mask;  // (1,H,W), values in {0,1}
  Tensor depth;        // (1,H,W), smaller is closer
  std::array<double, 3> ambient{0.12, 0.12, 0.12};
  Frustum frustum;

  int height() const { return albedo.height(); }
  int width() const { return albedo.width(); }
  double mask_coverage() const;
  /// Throws capaa::Error when an invariant is broken.
  void validate() const;
};

struct Pose {
  std::string id;
  double rotation_deg = 0.0;
  double zoom = 1.0;
  Eigen::Matrix3d homography = Eigen::Matrix3d::Identity();
};

struct RenderOptions {
  double noise_sigma = 0.01;
  Eigen::Matrix3d mixing = default_mixing();
  double gamma = 1.0 / 2.2;
  /// Object-layer shift in pixels per unit depth gap at 90 degrees.
  double parallax_px = 10.0;

  static Eigen::Matrix3d default_mixing();
};

/// The seven evaluation poses: original, rotations of -30/-15/+15/+30 degrees and zooms 0.9/1.1.
std::vector<Pose> pose_set(int height, int width);
Pose rotation_pose(double degrees, int height, int width);
Pose zoom_pose(double factor, int height, int width);
const Pose& find_pose(const std::vector<Pose>& poses, const std::string& id);

/// What a camera pixel sees.
enum class Surface : std::uint8_t { kObject, kBackground, kShadow, kOutside };

struct PoseGeometry {
  int height = 0;
  int width = 0;
  std::vector<Surface> surface;           // per camera pixel
  std::vector<Eigen::Vector2d> source;    // original-frame sample point per camera pixel
  std::vector<std::uint8_t> lit;          // projector light reaches the visible surface
};

/// Layer classification and sample points for every camera pixel at a pose.
PoseGeometry pose_geometry(const Scene& s, const Pose& g, const RenderOptions& opt = {});

CapturedImage render(const ProjectorImage& x, const Scene& s, const Pose& g, std::uint64_t seed,
                     const RenderOptions& opt = {});

/// Pixels reachable by direct projector light at pose g; (1,H,W) in {0,1}.
Tensor direct_light_mask(const Scene& s, const Pose& g, const RenderOptions& opt = {});

struct CaptureSample {
  ProjectorImage projector_input;
  CapturedImage captured;
  std::string pose_id;
};

/// Plain gray projector image x0.
ProjectorImage gray_pattern(int height, int width, double level = 0.5);

/// M projector/capture pairs. The first is always the gray pattern; the rest
/// cycle through solid colours, smooth colour fields, checkerboards and
/// per-pixel noise.
std::vector<CaptureSample> capture_dataset(const Scene& s, const Pose& g, int count, std::uint64_t seed,
                                           const RenderOptions& opt = {});

/// Random projector pattern of the given family index (0..3, as above).
ProjectorImage random_pattern(int family, int height, int width, std::mt19937_64& rng);

inline constexpr int kNumClasses = 10;
/// Synthetic object-on-background scene of class `label` (shape x palette).
Scene make_scene(int label, int size, std::mt19937_64& rng);
std::string class_name(int label);

void save_scene(const Scene& s, const std::filesystem::path& dir);
Scene load_scene(const std::filesystem::path& dir);

}  // namespace capaa::scene
