#pragma once

// Pinhole camera model, bilinear sampling and image warping.
//
// Conventions used across the library:
//   * pixel (u, v) = (column, row); pixel centers sit at integer coordinates;
//   * the camera looks down +Z, x right, y down;
//   * poses are camera-to-world, projection applies the inverse.

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "pcfuse/image.hpp"

namespace pcfuse {

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  bool valid() const {
    return fx > 0 && fy > 0 && width > 0 && height > 0 && cx >= 0 && cx < width && cy >= 0 && cy < height;
  }

  void validate() const {
    if (!valid()) {
      throw std::invalid_argument("invalid camera intrinsics: fx=" + std::to_string(fx) + " fy=" + std::to_string(fy) +
                                  " cx=" + std::to_string(cx) + " cy=" + std::to_string(cy) + " size=" +
                                  std::to_string(width) + "x" + std::to_string(height));
    }
  }

  template <typename T>
  bool matches(const BasicImage<T>& img) const {
    return img.width() == width && img.height() == height;
  }

  bool operator==(const CameraIntrinsics&) const = default;
};

/// Rigid camera-to-world transform for frame `frame`.
class CameraPose {
 public:
  CameraPose() = default;

  /// Throws when the upper-left block is not a rotation within `tolerance`
  /// or the last row is not (0, 0, 0, 1).
  static CameraPose from_matrix(const Eigen::Matrix4d& camera_to_world, int frame = 0, double tolerance = 1e-6) {
    if (!is_rigid(camera_to_world, tolerance)) {
      throw std::invalid_argument("pose for frame " + std::to_string(frame) + " is not a rigid transform");
    }
    CameraPose pose;
    pose.camera_to_world_ = camera_to_world;
    pose.frame = frame;
    return pose;
  }

  static CameraPose from_rotation_translation(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation,
                                              int frame = 0) {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return from_matrix(m, frame);
  }

  static CameraPose from_translation(const Eigen::Vector3d& translation, int frame = 0) {
    return from_rotation_translation(Eigen::Matrix3d::Identity(), translation, frame);
  }

  static bool is_rigid(const Eigen::Matrix4d& m, double tolerance) {
    if (!m.allFinite()) return false;
    const Eigen::Vector4d last_row = m.row(3).transpose();
    if ((last_row - Eigen::Vector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > tolerance) return false;
    const Eigen::Matrix3d r = m.topLeftCorner<3, 3>();
    if ((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tolerance) return false;
    return std::abs(r.determinant() - 1.0) <= tolerance;
  }

  const Eigen::Matrix4d& matrix() const { return camera_to_world_; }
  Eigen::Matrix3d rotation() const { return camera_to_world_.topLeftCorner<3, 3>(); }
  Eigen::Vector3d translation() const { return camera_to_world_.topRightCorner<3, 1>(); }

  Eigen::Matrix4d inverse_matrix() const {
    Eigen::Matrix4d inv = Eigen::Matrix4d::Identity();
    const Eigen::Matrix3d rt = rotation().transpose();
    inv.topLeftCorner<3, 3>() = rt;
    inv.topRightCorner<3, 1>() = -rt * translation();
    return inv;
  }

  Eigen::Vector3d to_world(const Eigen::Vector3d& p_camera) const { return rotation() * p_camera + translation(); }
  Eigen::Vector3d to_camera(const Eigen::Vector3d& p_world) const {
    return rotation().transpose() * (p_world - translation());
  }

  int frame = 0;

 private:
  Eigen::Matrix4d camera_to_world_ = Eigen::Matrix4d::Identity();
};

struct Projection {
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();  // continuous (u, v)
  double depth = 0.0;                               // camera-frame z
  bool in_front = false;                            // false when z <= 0; pixel is meaningless then
};

/// Perspective projection of a world point into the camera at `pose`.
inline Projection project_point(const Eigen::Vector3d& x, const CameraPose& pose, const CameraIntrinsics& k) {
  const Eigen::Vector3d pc = pose.to_camera(x);
  Projection out;
  out.depth = pc.z();
  if (!(pc.z() > 0.0) || !pc.allFinite()) return out;
  out.in_front = true;
  out.pixel = {k.fx * pc.x() / pc.z() + k.cx, k.fy * pc.y() / pc.z() + k.cy};
  return out;
}

/// Camera-frame point seen at continuous pixel (u, v) with depth z.
inline Eigen::Vector3d backproject_pixel(double u, double v, double z, const CameraIntrinsics& k) {
  return {(u - k.cx) / k.fx * z, (v - k.cy) / k.fy * z, z};
}

/// Per-pixel world points for an H x W depth map.
class PointBuffer {
 public:
  PointBuffer() = default;
  PointBuffer(int width, int height)
      : width_(width),
        height_(height),
        points_(static_cast<std::size_t>(width) * height, Eigen::Vector3d::Zero()),
        valid_(static_cast<std::size_t>(width) * height, 0) {}

  int width() const { return width_; }
  int height() const { return height_; }

  const Eigen::Vector3d& at(int x, int y) const { return points_[idx(x, y)]; }
  Eigen::Vector3d& at(int x, int y) { return points_[idx(x, y)]; }
  bool valid(int x, int y) const { return valid_[idx(x, y)] != 0; }
  void set(int x, int y, const Eigen::Vector3d& p) {
    points_[idx(x, y)] = p;
    valid_[idx(x, y)] = 1;
  }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto v : valid_) n += v;
    return n;
  }

 private:
  std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

  int width_ = 0;
  int height_ = 0;
  std::vector<Eigen::Vector3d> points_;
  std::vector<std::uint8_t> valid_;
};

/// Lifts every valid depth pixel to world space. Hole pixels stay invalid.
inline PointBuffer unproject(const Image& depth, const CameraIntrinsics& k, const CameraPose& pose) {
  if (!k.matches(depth)) throw std::invalid_argument("unproject: depth map does not match intrinsics");
  PointBuffer out(depth.width(), depth.height());
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      const double d = depth(x, y);
      if (!is_valid_depth(d)) continue;
      out.set(x, y, pose.to_world(backproject_pixel(x, y, d, k)));
    }
  }
  return out;
}

/// The (up to) four pixels contributing to a bilinear lookup. Entries with
/// zero weight are dropped, so an exact grid position has a single term.
struct BilinearFootprint {
  std::array<int, 4> x{};
  std::array<int, 4> y{};
  std::array<double, 4> weight{};
  int count = 0;
};

/// Empty when (u, v) lies outside [0, W-1] x [0, H-1].
inline std::optional<BilinearFootprint> bilinear_footprint(double u, double v, int width, int height) {
  if (!(u >= 0.0 && v >= 0.0 && u <= width - 1 && v <= height - 1)) return std::nullopt;
  int x0 = static_cast<int>(std::floor(u));
  int y0 = static_cast<int>(std::floor(v));
  if (x0 > width - 2) x0 = std::max(width - 2, 0);
  if (y0 > height - 2) y0 = std::max(height - 2, 0);
  const double fx = u - x0;
  const double fy = v - y0;
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);

  BilinearFootprint fp;
  const std::array<int, 4> xs{x0, x1, x0, x1};
  const std::array<int, 4> ys{y0, y0, y1, y1};
  const std::array<double, 4> ws{(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  for (int i = 0; i < 4; ++i) {
    if (ws[i] <= 0.0) continue;
    fp.x[fp.count] = xs[i];
    fp.y[fp.count] = ys[i];
    fp.weight[fp.count] = ws[i];
    ++fp.count;
  }
  return fp;
}

/// Bilinear lookup of every channel at (u, v) into `out`. Returns false when
/// the point is out of bounds or a contributing pixel is non-finite.
inline bool bilinear_sample(const Image& img, double u, double v, std::span<double> out) {
  const auto fp = bilinear_footprint(u, v, img.width(), img.height());
  if (!fp) return false;
  const int channels = img.channels();
  for (int c = 0; c < channels; ++c) out[c] = 0.0;
  for (int i = 0; i < fp->count; ++i) {
    const auto px = img.pixel(fp->x[i], fp->y[i]);
    for (int c = 0; c < channels; ++c) {
      if (!std::isfinite(px[c])) return false;
      out[c] += fp->weight[i] * px[c];
    }
  }
  return true;
}

inline std::optional<double> bilinear_sample(const Image& img, double u, double v, int channel = 0) {
  const auto fp = bilinear_footprint(u, v, img.width(), img.height());
  if (!fp) return std::nullopt;
  double acc = 0.0;
  for (int i = 0; i < fp->count; ++i) {
    const double value = img(fp->x[i], fp->y[i], channel);
    if (!std::isfinite(value)) return std::nullopt;
    acc += fp->weight[i] * value;
  }
  return acc;
}

inline std::optional<double> bilinear_sample(const Image& img, const Eigen::Vector2d& p, int channel = 0) {
  return bilinear_sample(img, p.x(), p.y(), channel);
}

inline std::optional<Eigen::Vector3d> bilinear_sample(const PointBuffer& points, double u, double v) {
  const auto fp = bilinear_footprint(u, v, points.width(), points.height());
  if (!fp) return std::nullopt;
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  for (int i = 0; i < fp->count; ++i) {
    if (!points.valid(fp->x[i], fp->y[i])) return std::nullopt;
    acc += fp->weight[i] * points.at(fp->x[i], fp->y[i]);
  }
  return acc;
}

/// Nearest pixel index for a continuous coordinate; halves round up.
inline int nearest_pixel(double coord) { return static_cast<int>(std::floor(coord + 0.5)); }

struct WarpResult {
  Image color;
  Image depth;  // destination-camera depth, kHole where uncovered
  Mask valid;
};

/// Forward-warps a color + depth frame into another camera. Each valid source
/// pixel is lifted with its depth, reprojected, and splatted to the nearest
/// destination pixel; the smallest destination depth wins (first source pixel
/// in row-major order on exact ties).
inline WarpResult rigid_warp(const Image& src_color, const Image& src_depth, const CameraPose& src_pose,
                             const CameraPose& dst_pose, const CameraIntrinsics& k) {
  if (!k.matches(src_depth)) throw std::invalid_argument("rigid_warp: depth does not match intrinsics");
  const bool has_color = !src_color.empty();
  if (has_color) require_same_size(src_color, src_depth, "rigid_warp");
  const int channels = has_color ? src_color.channels() : 1;

  WarpResult out{Image(k.width, k.height, channels, 0.0), Image(k.width, k.height, 1, kHole),
                 Mask(k.width, k.height, 1, 0)};
  for (int y = 0; y < src_depth.height(); ++y) {
    for (int x = 0; x < src_depth.width(); ++x) {
      const double d = src_depth(x, y);
      if (!is_valid_depth(d)) continue;
      const Eigen::Vector3d world = src_pose.to_world(backproject_pixel(x, y, d, k));
      const Projection proj = project_point(world, dst_pose, k);
      if (!proj.in_front) continue;
      const int u = nearest_pixel(proj.pixel.x());
      const int v = nearest_pixel(proj.pixel.y());
      if (!out.depth.in_bounds(u, v)) continue;
      if (!(proj.depth < out.depth(u, v))) continue;
      out.depth(u, v) = proj.depth;
      out.valid(u, v) = 1;
      if (has_color) {
        for (int c = 0; c < channels; ++c) out.color(u, v, c) = src_color(x, y, c);
      }
    }
  }
  return out;
}

/// out[p] = img_next(p + flow[p]) by bilinear sampling. Pixels whose sample is
/// out of bounds, touches a non-finite value, or whose flow is non-finite are
/// NaN in every channel.
inline Image backward_warp_flow(const Image& img_next, const Image& flow) {
  require_same_size(img_next, flow, "backward_warp_flow");
  if (flow.channels() != 2) throw std::invalid_argument("backward_warp_flow: flow must have 2 channels");
  const int channels = img_next.channels();
  Image out(img_next.width(), img_next.height(), channels, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> sample(channels);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      const double fu = flow(x, y, 0);
      const double fv = flow(x, y, 1);
      if (!std::isfinite(fu) || !std::isfinite(fv)) continue;
      if (!bilinear_sample(img_next, x + fu, y + fv, sample)) continue;
      for (int c = 0; c < channels; ++c) out(x, y, c) = sample[c];
    }
  }
  return out;
}

}  // namespace pcfuse
