#pragma once

// Analytic test scenes: a textured tilted plane seen by a laterally moving
// camera, optionally with a textured sphere moving in front of it. Depth,
// poses, flow and the object mask are exact (ray casting); the depth input
// is ground truth plus optional i.i.d. Gaussian noise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "pcfuse/geometry.hpp"
#include "pcfuse/image.hpp"

namespace pcfuse {

enum class SceneKind { static_plane, moving_sphere };

struct SyntheticOptions {
  SceneKind scene = SceneKind::static_plane;
  int frames = 20;
  int width = 64;
  int height = 64;
  double noise_sigma = 0.0;  // meters, on the depth input only
  std::uint64_t seed = 7;
};

struct SyntheticSequence {
  CameraIntrinsics intrinsics;
  std::vector<Image> colors;        // 3 channels in [0, 1]
  std::vector<Image> depths;        // input depth (noisy if requested)
  std::vector<Image> ground_truth;  // exact depth
  std::vector<Image> flows;         // frames - 1 forward flows
  std::vector<CameraPose> poses;    // camera-to-world
  std::vector<Image> object_masks;  // 1 on the sphere, else 0
};

/// Scene constants (meters). The plane passes through plane_point with a
/// normal tilted away from the optical axis.
struct SyntheticScene {
  Eigen::Vector3d plane_point{0.0, 0.0, 3.0};
  Eigen::Vector3d plane_normal = Eigen::Vector3d(0.25, 0.1, -1.0).normalized();
  double texture_period = 0.8;
  double sphere_radius = 0.45;
  Eigen::Vector3d sphere_start{-0.6, 0.1, 2.0};
  Eigen::Vector3d sphere_velocity{0.025, 0.0, 0.0};  // per frame
  double camera_step = 0.04;                         // lateral motion per frame
  double camera_sway = 0.02;                         // vertical sinusoid amplitude

  Eigen::Vector3d camera_center(int t) const { return {camera_step * t, camera_sway * std::sin(0.5 * t), 0.0}; }
  Eigen::Vector3d sphere_center(int t) const { return sphere_start + sphere_velocity * t; }

  Eigen::Vector3d plane_color(const Eigen::Vector3d& x) const {
    const double w = 2.0 * std::numbers::pi / texture_period;
    return {0.5 + 0.25 * std::sin(w * x.x()) + 0.15 * std::cos(w * x.y()),
            0.45 + 0.2 * std::sin(w * (x.x() + x.y()) + 1.0),
            0.4 + 0.2 * std::cos(w * x.y() - 0.5) + 0.1 * std::sin(0.5 * w * x.x())};
  }

  /// Texture fixed to the sphere, so it moves with it.
  Eigen::Vector3d sphere_color(const Eigen::Vector3d& local) const {
    const double w = 2.0 * std::numbers::pi / (0.5 * texture_period);
    return {0.85 + 0.1 * std::sin(w * local.y()), 0.25 + 0.15 * std::sin(w * local.x()), 0.2 + 0.1 * std::cos(w * local.z())};
  }
};

struct RayHit {
  double depth = kHole;
  bool on_sphere = false;
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
};

/// First intersection of the ray through pixel (u, v) of a camera at
/// `center` (no rotation) with the scene at time t.
inline RayHit cast_ray(const SyntheticScene& scene, bool with_sphere, const Eigen::Vector3d& center, double u,
                       double v, const CameraIntrinsics& k, int t) {
  const Eigen::Vector3d dir((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
  RayHit hit;
  const double denom = scene.plane_normal.dot(dir);
  if (std::abs(denom) > 1e-12) {
    const double s = scene.plane_normal.dot(scene.plane_point - center) / denom;
    if (s > 0.0) {
      hit.depth = s;
      hit.point = center + s * dir;
    }
  }
  if (with_sphere) {
    const Eigen::Vector3d oc = center - scene.sphere_center(t);
    const double a = dir.squaredNorm();
    const double b = 2.0 * dir.dot(oc);
    const double c = oc.squaredNorm() - scene.sphere_radius * scene.sphere_radius;
    const double disc = b * b - 4.0 * a * c;
    if (disc >= 0.0) {
      const double s = (-b - std::sqrt(disc)) / (2.0 * a);
      if (s > 0.0 && s < hit.depth) {
        hit.depth = s;
        hit.point = center + s * dir;
        hit.on_sphere = true;
      }
    }
  }
  return hit;
}

inline CameraIntrinsics synthetic_intrinsics(int width, int height) {
  CameraIntrinsics k;
  k.fx = 60.0 * width / 64.0;
  k.fy = k.fx;
  k.cx = 0.5 * (width - 1);
  k.cy = 0.5 * (height - 1);
  k.width = width;
  k.height = height;
  return k;
}

inline SyntheticSequence make_synthetic(const SyntheticOptions& opt, const SyntheticScene& scene = {}) {
  if (opt.frames < 1) throw std::invalid_argument("make_synthetic: need at least one frame");
  if (opt.width < 2 || opt.height < 2) throw std::invalid_argument("make_synthetic: image too small");
  if (opt.noise_sigma < 0.0) throw std::invalid_argument("make_synthetic: noise must be non-negative");
  const bool sphere = opt.scene == SceneKind::moving_sphere;
  SyntheticSequence seq;
  seq.intrinsics = synthetic_intrinsics(opt.width, opt.height);
  const auto& k = seq.intrinsics;
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> noise(0.0, opt.noise_sigma > 0.0 ? opt.noise_sigma : 1.0);

  for (int t = 0; t < opt.frames; ++t) {
    const Eigen::Vector3d center = scene.camera_center(t);
    seq.poses.push_back(CameraPose::from_translation(center, t));
    Image color(opt.width, opt.height, 3);
    Image gt(opt.width, opt.height, 1, kHole);
    Image obj(opt.width, opt.height, 1, 0.0);
    Image flow;
    if (t + 1 < opt.frames) flow = Image(opt.width, opt.height, 2, 0.0);
    const Eigen::Vector3d sphere_motion = scene.sphere_center(t + 1) - scene.sphere_center(t);
    const CameraPose next_pose = CameraPose::from_translation(scene.camera_center(t + 1), t + 1);

    for (int y = 0; y < opt.height; ++y) {
      for (int x = 0; x < opt.width; ++x) {
        const RayHit hit = cast_ray(scene, sphere, center, x, y, k, t);
        if (!is_valid_depth(hit.depth)) continue;
        gt(x, y) = hit.depth;
        const Eigen::Vector3d c =
            hit.on_sphere ? scene.sphere_color(hit.point - scene.sphere_center(t)) : scene.plane_color(hit.point);
        for (int ch = 0; ch < 3; ++ch) color(x, y, ch) = std::clamp(c[ch], 0.0, 1.0);
        obj(x, y) = hit.on_sphere ? 1.0 : 0.0;
        if (!flow.empty()) {
          const Eigen::Vector3d moved = hit.on_sphere ? Eigen::Vector3d(hit.point + sphere_motion) : hit.point;
          const Projection p = project_point(moved, next_pose, k);
          flow(x, y, 0) = p.pixel.x() - x;
          flow(x, y, 1) = p.pixel.y() - y;
        }
      }
    }
    Image depth = gt;
    if (opt.noise_sigma > 0.0) {
      for (double& d : depth.data()) {
        if (!is_valid_depth(d)) continue;
        d = std::max(d + noise(rng), 1e-3);
      }
    }
    seq.colors.push_back(std::move(color));
    seq.ground_truth.push_back(std::move(gt));
    seq.depths.push_back(std::move(depth));
    seq.object_masks.push_back(std::move(obj));
    if (!flow.empty()) seq.flows.push_back(std::move(flow));
  }
  return seq;
}

}  // namespace pcfuse
