#include "capaa/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "capaa/error.hpp"
#include "json.hpp"

namespace capaa::scene {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

Eigen::Matrix3d translation(double tx, double ty) {
  Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
  t(0, 2) = tx;
  t(1, 2) = ty;
  return t;
}

bool inside_frame(const Eigen::Vector2d& p, int h, int w) {
  return p.x() >= -0.5 && p.x() <= w - 0.5 && p.y() >= -0.5 && p.y() <= h - 0.5;
}

bool mask_at(const Tensor& mask, const Eigen::Vector2d& p) {
  if (!inside_frame(p, mask.height(), mask.width())) return false;
  const int x = std::clamp(static_cast<int>(std::lround(p.x())), 0, mask.width() - 1);
  const int y = std::clamp(static_cast<int>(std::lround(p.y())), 0, mask.height() - 1);
  return mask.at(0, y, x) > 0.5;
}

double bilinear(const Tensor& t, int c, const Eigen::Vector2d& p) {
  const double fx = std::clamp(p.x(), 0.0, t.width() - 1.0);
  const double fy = std::clamp(p.y(), 0.0, t.height() - 1.0);
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const int x1 = std::min(x0 + 1, t.width() - 1);
  const int y1 = std::min(y0 + 1, t.height() - 1);
  const double wx = fx - x0;
  const double wy = fy - y0;
  return (1 - wy) * ((1 - wx) * t.at(c, y0, x0) + wx * t.at(c, y0, x1)) +
         wy * ((1 - wx) * t.at(c, y1, x0) + wx * t.at(c, y1, x1));
}

/// Horizontal object-layer shift (original-frame pixels) at a pose.
double parallax_shift(const Scene& s, const Pose& g, const RenderOptions& opt) {
  if (g.rotation_deg == 0.0) return 0.0;
  const std::size_t plane = s.object_mask.size();
  double obj_depth = 0.0;
  double count = 0.0;
  for (std::size_t p = 0; p < plane; ++p) {
    if (s.object_mask[p] > 0.5) {
      obj_depth += s.depth[p];
      count += 1.0;
    }
  }
  if (count == 0.0) return 0.0;
  const double gap = s.depth.max() - obj_depth / count;
  return opt.parallax_px * std::sin(g.rotation_deg * kDegToRad) * gap;
}

}  // namespace

double Scene::mask_coverage() const {
  if (object_mask.empty()) return 0.0;
  double on = 0.0;
  for (double v : object_mask.values()) on += v > 0.5 ? 1.0 : 0.0;
  return on / static_cast<double>(object_mask.size());
}

void Scene::validate() const {
  if (albedo.empty()) throw Error("invalid_scene", "scene " + id + " has no albedo");
  const Shape plane{1, albedo.height(), albedo.width()};
  if (!(object_mask.shape() == plane) || !(depth.shape() == plane)) {
    throw Error("invalid_scene", "scene " + id + ": mask/depth shape does not match albedo");
  }
  const double cov = mask_coverage();
  if (cov < 0.10 || cov > 0.60) {
    throw Error("invalid_scene", "scene " + id + ": object mask covers " + std::to_string(cov) + " of the frame");
  }
  for (double a : ambient)
    if (a < 0.0 || a > 1.0) throw Error("invalid_scene", "scene " + id + ": ambient outside [0,1]");
}

Eigen::Matrix3d RenderOptions::default_mixing() {
  Eigen::Matrix3d m;
  m << 0.8, 0.1, 0.1, 0.1, 0.8, 0.1, 0.1, 0.1, 0.8;
  return m;
}

Pose rotation_pose(double degrees, int height, int width) {
  const double cx = (width - 1) / 2.0;
  const double cy = (height - 1) / 2.0;
  const double phi = degrees * kDegToRad / 3.0;
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  r(0, 0) = std::cos(phi);
  r(0, 1) = -std::sin(phi);
  r(1, 0) = std::sin(phi);
  r(1, 1) = std::cos(phi);
  const double pan = 0.12 * width * std::sin(degrees * kDegToRad);
  Pose p;
  p.id = (degrees > 0 ? "rot+" : "rot") + std::to_string(static_cast<int>(std::lround(degrees)));
  p.rotation_deg = degrees;
  p.homography = translation(cx + pan, cy) * r * translation(-cx, -cy);
  return p;
}

Pose zoom_pose(double factor, int height, int width) {
  const double cx = (width - 1) / 2.0;
  const double cy = (height - 1) / 2.0;
  Eigen::Matrix3d s = Eigen::Matrix3d::Identity();
  s(0, 0) = factor;
  s(1, 1) = factor;
  Pose p;
  char buf[32];
  std::snprintf(buf, sizeof buf, "zoom%.2f", factor);
  p.id = buf;
  p.zoom = factor;
  p.homography = translation(cx, cy) * s * translation(-cx, -cy);
  return p;
}

std::vector<Pose> pose_set(int height, int width) {
  Pose original;
  original.id = "original";
  return {original,
          rotation_pose(-30.0, height, width),
          rotation_pose(-15.0, height, width),
          rotation_pose(15.0, height, width),
          rotation_pose(30.0, height, width),
          zoom_pose(0.9, height, width),
          zoom_pose(1.1, height, width)};
}

const Pose& find_pose(const std::vector<Pose>& poses, const std::string& id) {
  for (const Pose& p : poses)
    if (p.id == id) return p;
  throw Error("unknown_pose", "no pose with id " + id);
}

PoseGeometry pose_geometry(const Scene& s, const Pose& g, const RenderOptions& opt) {
  if (std::abs(g.homography.determinant()) <= 1e-6) {
    throw Error("invalid_homography", "pose " + g.id + " has a singular homography");
  }
  const int h = s.height();
  const int w = s.width();
  const Eigen::Matrix3d inv = g.homography.inverse();
  const Eigen::Vector2d shift(parallax_shift(s, g, opt), 0.0);
  const bool has_parallax = shift.x() != 0.0;

  PoseGeometry geo;
  geo.height = h;
  geo.width = w;
  geo.surface.resize(static_cast<std::size_t>(h) * w);
  geo.source.resize(geo.surface.size());
  geo.lit.resize(geo.surface.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const Eigen::Vector3d hp = inv * Eigen::Vector3d(x, y, 1.0);
      const Eigen::Vector2d p = hp.head<2>() / hp.z();
      const Eigen::Vector2d obj = p - shift;
      if (mask_at(s.object_mask, obj)) {
        geo.surface[i] = Surface::kObject;
        geo.source[i] = obj;
        geo.lit[i] = s.frustum.contains(obj.x(), obj.y());
      } else if (!inside_frame(p, h, w)) {
        geo.surface[i] = Surface::kOutside;
        geo.source[i] = p;
        geo.lit[i] = 0;
      } else if (has_parallax && mask_at(s.object_mask, p)) {
        geo.surface[i] = Surface::kShadow;
        geo.source[i] = p;
        geo.lit[i] = 0;
      } else {
        geo.surface[i] = Surface::kBackground;
        geo.source[i] = p;
        geo.lit[i] = s.frustum.contains(p.x(), p.y());
      }
    }
  return geo;
}

CapturedImage render(const ProjectorImage& x, const Scene& s, const Pose& g, std::uint64_t seed,
                     const RenderOptions& opt) {
  const int h = s.height();
  const int w = s.width();
  if (x.height() != h || x.width() != w) {
    throw Error("incompatible_images", "projector image " + x.tensor().shape().str() + " vs scene " +
                                           s.albedo.tensor().shape().str());
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, opt.noise_sigma > 0.0 ? opt.noise_sigma : 1.0);

  Tensor lit({3, h, w});
  Tensor unlit({3, h, w});
  const Tensor& xt = x.tensor();
  const Tensor& alb = s.albedo.tensor();
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx) {
      const std::size_t p = static_cast<std::size_t>(y) * w + xx;
      const double direct = s.frustum.contains(xx, y) ? 1.0 : 0.0;
      const Eigen::Vector3d proj(xt[p], xt[plane + p], xt[2 * plane + p]);
      const Eigen::Vector3d mixed = opt.mixing * proj;
      for (int c = 0; c < 3; ++c) {
        const double n = opt.noise_sigma > 0.0 ? noise(rng) : 0.0;
        const double a = alb[c * plane + p];
        lit[c * plane + p] = a * (s.ambient[c] + direct * mixed[c]) + n;
        unlit[c * plane + p] = a * s.ambient[c] + n;
      }
    }
  for (Tensor* t : {&lit, &unlit})
    for (double& v : t->values()) v = std::clamp(std::pow(std::max(v, 0.0), opt.gamma), 0.0, 1.0);

  const PoseGeometry geo = pose_geometry(s, g, opt);
  Tensor out({3, h, w});
  for (std::size_t i = 0; i < plane; ++i) {
    const Tensor& src = (geo.surface[i] == Surface::kObject || geo.surface[i] == Surface::kBackground) ? lit : unlit;
    for (int c = 0; c < 3; ++c) out[c * plane + i] = bilinear(src, c, geo.source[i]);
  }
  return RgbImage::clipped(std::move(out));
}

Tensor direct_light_mask(const Scene& s, const Pose& g, const RenderOptions& opt) {
  const PoseGeometry geo = pose_geometry(s, g, opt);
  Tensor mask = make_map(s.height(), s.width());
  for (std::size_t i = 0; i < geo.lit.size(); ++i) mask[i] = geo.lit[i] ? 1.0 : 0.0;
  return mask;
}

ProjectorImage gray_pattern(int height, int width, double level) {
  return RgbImage::filled(height, width, level, level, level);
}

ProjectorImage random_pattern(int family, int height, int width, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t({3, height, width});
  switch (family % 4) {
    case 0: {
      for (int c = 0; c < 3; ++c) {
        const double v = u(rng);
        for (double& p : t.plane(c)) p = v;
      }
      break;
    }
    case 1: {
      for (int c = 0; c < 3; ++c) {
        const double base = 0.2 + 0.6 * u(rng);
        double fx[3], fy[3], ph[3], amp[3];
        for (int k = 0; k < 3; ++k) {
          fx[k] = (u(rng) * 2 - 1) * 0.4;
          fy[k] = (u(rng) * 2 - 1) * 0.4;
          ph[k] = u(rng) * 2 * std::numbers::pi;
          amp[k] = 0.25 * u(rng);
        }
        for (int y = 0; y < height; ++y)
          for (int x = 0; x < width; ++x) {
            double v = base;
            for (int k = 0; k < 3; ++k) v += amp[k] * std::sin(fx[k] * x + fy[k] * y + ph[k]);
            t.at(c, y, x) = v;
          }
      }
      break;
    }
    case 2: {
      const int periods[] = {1, 2, 4, 8};
      const int period = periods[static_cast<int>(u(rng) * 4) % 4];
      double a[3], b[3];
      for (int c = 0; c < 3; ++c) {
        a[c] = u(rng);
        b[c] = u(rng);
      }
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          const bool odd = ((x / period) + (y / period)) % 2;
          for (int c = 0; c < 3; ++c) t.at(c, y, x) = odd ? a[c] : b[c];
        }
      break;
    }
    default: {
      const double level = 0.3 + 0.4 * u(rng);
      const double amp = 0.4 * u(rng);
      for (double& p : t.values()) p = level + amp * (2 * u(rng) - 1);
      break;
    }
  }
  return RgbImage::clipped(std::move(t));
}

std::vector<CaptureSample> capture_dataset(const Scene& s, const Pose& g, int count, std::uint64_t seed,
                                           const RenderOptions& opt) {
  if (count < 1) throw Error("invalid_argument", "capture_dataset needs at least one sample");
  std::mt19937_64 rng(seed);
  std::vector<CaptureSample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    ProjectorImage x = i == 0 ? gray_pattern(s.height(), s.width()) : random_pattern(i - 1, s.height(), s.width(), rng);
    CapturedImage cap = render(x, s, g, seed * 1000003ULL + static_cast<std::uint64_t>(i), opt);
    out.push_back({std::move(x), std::move(cap), g.id});
  }
  return out;
}

std::string class_name(int label) {
  static const char* shapes[] = {"disk", "square", "triangle", "ring", "cross"};
  static const char* palettes[] = {"warm", "cool"};
  if (label < 0 || label >= kNumClasses) throw Error("invalid_label", "class label out of range");
  return std::string(palettes[label / 5]) + "_" + shapes[label % 5];
}

Scene make_scene(int label, int size, std::mt19937_64& rng) {
  if (label < 0 || label >= kNumClasses) throw Error("invalid_label", "class label out of range");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int shape = label % 5;
  const bool warm = label < 5;

  Scene s;
  s.id = class_name(label);
  s.label = label;
  s.frustum = {0.0, 0.0, size - 1.0, size - 1.0};
  const double amb = 0.10 + 0.05 * u(rng);
  s.ambient = {amb, amb, amb};

  const double cx = (size - 1) / 2.0 + (u(rng) * 2 - 1) * 0.09 * size;
  const double cy = (size - 1) / 2.0 + (u(rng) * 2 - 1) * 0.09 * size;
  const double r = (0.24 + 0.06 * u(rng)) * size;

  double tint[3];
  if (warm) {
    tint[0] = 0.80 + 0.15 * u(rng);
    tint[1] = 0.30 + 0.20 * u(rng);
    tint[2] = 0.10 + 0.15 * u(rng);
  } else {
    tint[0] = 0.10 + 0.15 * u(rng);
    tint[1] = 0.35 + 0.25 * u(rng);
    tint[2] = 0.75 + 0.20 * u(rng);
  }
  const double bg_level = 0.45 + 0.25 * u(rng);
  double bg_tint[3];
  for (double& b : bg_tint) b = bg_level + (u(rng) * 2 - 1) * 0.06;
  const double wave_fx = (u(rng) * 2 - 1) * 0.5;
  const double wave_fy = (u(rng) * 2 - 1) * 0.5;
  const double wave_phase = u(rng) * 6.28;
  const double shade_dir = u(rng) * 6.28;

  Tensor alb({3, size, size});
  s.object_mask = make_map(size, size);
  s.depth = make_map(size, size, 1.0);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double dx = x - cx;
      const double dy = y - cy;
      const double dist = std::hypot(dx, dy);
      bool inside = false;
      switch (shape) {
        case 0: inside = dist < r; break;
        case 1: inside = std::abs(dx) < 0.85 * r && std::abs(dy) < 0.85 * r; break;
        case 2: inside = dy > -r && dy < r && std::abs(dx) < 0.5 * (dy + r); break;
        case 3: inside = dist < r && dist > 0.55 * r; break;
        default:
          inside = (std::abs(dx) < 0.35 * r && std::abs(dy) < r) || (std::abs(dy) < 0.35 * r && std::abs(dx) < r);
      }
      if (inside) {
        s.object_mask.at(0, y, x) = 1.0;
        s.depth.at(0, y, x) = 0.4;
        const double shade = 0.9 + 0.1 * (dx * std::cos(shade_dir) + dy * std::sin(shade_dir)) / r;
        for (int c = 0; c < 3; ++c) alb.at(c, y, x) = tint[c] * shade;
      } else {
        const double wave = 0.05 * std::sin(wave_fx * x + wave_fy * y + wave_phase);
        for (int c = 0; c < 3; ++c) alb.at(c, y, x) = bg_tint[c] + wave;
      }
    }
  s.albedo = RgbImage(quantize8(alb));
  s.validate();
  return s;
}

void save_scene(const Scene& s, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_png(dir / "albedo.png", s.albedo.tensor());
  write_png(dir / "object_mask.png", s.object_mask);
  write_png(dir / "depth.png", s.depth);
  nlohmann::json meta = {
      {"id", s.id},
      {"label", s.label},
      {"ambient", s.ambient},
      {"frustum", {s.frustum.x0, s.frustum.y0, s.frustum.x1, s.frustum.y1}},
  };
  std::ofstream(dir / "scene.json") << meta.dump(2) << "\n";
}

Scene load_scene(const std::filesystem::path& dir) {
  for (const char* name : {"albedo.png", "object_mask.png", "depth.png", "scene.json"}) {
    if (!std::filesystem::exists(dir / name)) throw Error("missing_file", "missing scene file: " + (dir / name).string());
  }
  Scene s;
  s.albedo = RgbImage(read_png(dir / "albedo.png"));
  s.object_mask = read_png(dir / "object_mask.png");
  s.depth = read_png(dir / "depth.png");
  for (double& v : s.object_mask.values()) v = v > 0.5 ? 1.0 : 0.0;
  std::ifstream in(dir / "scene.json");
  const nlohmann::json meta = nlohmann::json::parse(in);
  s.id = meta.at("id").get<std::string>();
  s.label = meta.at("label").get<int>();
  s.ambient = meta.at("ambient").get<std::array<double, 3>>();
  const auto f = meta.at("frustum").get<std::array<double, 4>>();
  s.frustum = {f[0], f[1], f[2], f[3]};
  s.validate();
  return s;
}

}  // namespace capaa::scene
