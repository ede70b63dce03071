#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pcfuse/geometry.hpp"
#include "pcfuse/image.hpp"

namespace pcfuse {

/// Default pruning threshold on point confidence.
inline constexpr double kDefaultPruneEpsilon = 3e-2;

/// Global scene state: points with color and confidence, stored in ascending
/// id order. Every per-point traversal walks this order.
class GlobalPointCloud {
 public:
  std::size_t size() const { return positions_.size(); }
  bool empty() const { return positions_.empty(); }

  std::uint64_t add(const Eigen::Vector3d& position, const Eigen::Vector3d& color, double confidence) {
    positions_.push_back(position);
    colors_.push_back(color);
    confidence_.push_back(confidence);
    ids_.push_back(next_id_);
    return next_id_++;
  }

  const std::vector<Eigen::Vector3d>& positions() const { return positions_; }
  const std::vector<Eigen::Vector3d>& colors() const { return colors_; }
  const std::vector<double>& confidence() const { return confidence_; }
  const std::vector<std::uint64_t>& ids() const { return ids_; }

  Eigen::Vector3d& position(std::size_t i) { return positions_[i]; }
  Eigen::Vector3d& color(std::size_t i) { return colors_[i]; }
  double& confidence(std::size_t i) { return confidence_[i]; }

  void clear() {
    positions_.clear();
    colors_.clear();
    confidence_.clear();
    ids_.clear();
  }

  /// Keeps points whose keep[i] is nonzero, preserving order and ids.
  std::size_t retain(const std::vector<std::uint8_t>& keep) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < size(); ++i) {
      if (!keep[i]) continue;
      positions_[out] = positions_[i];
      colors_[out] = colors_[i];
      confidence_[out] = confidence_[i];
      ids_[out] = ids_[i];
      ++out;
    }
    const std::size_t removed = size() - out;
    positions_.resize(out);
    colors_.resize(out);
    confidence_.resize(out);
    ids_.resize(out);
    return removed;
  }

  double mean_confidence() const {
    if (empty()) return 0.0;
    double s = 0.0;
    for (double r : confidence_) s += r;
    return s / static_cast<double>(size());
  }

  bool operator==(const GlobalPointCloud&) const = default;

 private:
  std::vector<Eigen::Vector3d> positions_;
  std::vector<Eigen::Vector3d> colors_;
  std::vector<double> confidence_;
  std::vector<std::uint64_t> ids_;
  std::uint64_t next_id_ = 0;
};

enum class PointVisibility : std::uint8_t {
  updated,      // projected in view with alpha < 0.5 and valid samples
  occluded,     // in view but alpha >= 0.5 or a sample was invalid
  out_of_view,  // behind the camera or outside the bilinear footprint
};

struct FrameIntegrationStats {
  std::size_t visible = 0;
  std::size_t updated = 0;
  std::size_t occluded = 0;
  std::size_t out_of_view = 0;
  std::size_t decayed = 0;
  std::size_t inserted = 0;
  std::size_t pruned = 0;
  double mean_confidence_before = 0.0;
  double mean_confidence_after = 0.0;
};

struct UpdateResult {
  std::vector<PointVisibility> visibility;  // one entry per point, cloud order
  std::size_t updated = 0;
  std::size_t occluded = 0;
  std::size_t out_of_view = 0;
};

/// Confidence-weighted association of every cloud point with the current
/// observation. For a point x projecting to x^ with bilinear alpha[x^] < 0.5:
///
///   x    <- (beta[x^] x    + gamma[x^] z[x^]) / (beta[x^] + gamma[x^])
///   col  <- (beta[x^] col  + gamma[x^] c[x^]) / (beta[x^] + gamma[x^])
///   conf <- beta[x^] + gamma[x^]
///
/// All lookups at x^ are bilinear. A point whose samples are invalid, or
/// whose weights sum to zero, is reported occluded and left unchanged.
inline UpdateResult update_points(GlobalPointCloud& cloud, const PointBuffer& z_t, const Image& c_t, const Image& alpha,
                                  const Image& beta, const Image& gamma, const CameraPose& pose,
                                  const CameraIntrinsics& k) {
  if (z_t.width() != k.width || z_t.height() != k.height || !k.matches(c_t) || !k.matches(alpha) ||
      !k.matches(beta) || !k.matches(gamma)) {
    throw std::invalid_argument("update_points: resolution mismatch");
  }
  UpdateResult result;
  result.visibility.resize(cloud.size(), PointVisibility::out_of_view);
  std::array<double, 3> color{};

  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Projection proj = project_point(cloud.position(i), pose, k);
    if (!proj.in_front || !bilinear_footprint(proj.pixel.x(), proj.pixel.y(), k.width, k.height)) {
      ++result.out_of_view;
      continue;
    }
    const double u = proj.pixel.x();
    const double v = proj.pixel.y();
    const auto a = bilinear_sample(alpha, u, v);
    const auto b = bilinear_sample(beta, u, v);
    const auto g = bilinear_sample(gamma, u, v);
    const auto z = bilinear_sample(z_t, u, v);
    const bool color_ok = bilinear_sample(c_t, u, v, color);
    if (!a || *a >= 0.5 || !b || !g || !z || !color_ok || !(*b + *g >= 1e-12)) {
      result.visibility[i] = PointVisibility::occluded;
      ++result.occluded;
      continue;
    }
    const double wsum = *b + *g;
    cloud.position(i) = (*b * cloud.position(i) + *g * *z) / wsum;
    const Eigen::Vector3d obs_color(color[0], color[1], color[2]);
    cloud.color(i) = (*b * cloud.color(i) + *g * obs_color) / wsum;
    cloud.confidence(i) = wsum;
    result.visibility[i] = PointVisibility::updated;
    ++result.updated;
  }
  return result;
}

/// Decrements the confidence of every occluded or out-of-view point by one.
inline std::size_t decay_unobserved(GlobalPointCloud& cloud, const std::vector<PointVisibility>& visibility) {
  if (visibility.size() != cloud.size()) throw std::invalid_argument("decay_unobserved: visibility size mismatch");
  std::size_t n = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (visibility[i] == PointVisibility::updated) continue;
    cloud.confidence(i) -= 1.0;
    ++n;
  }
  return n;
}

/// Appends one point per valid pixel with alpha >= 0.5, confidence taken from
/// `initial_confidence` at that pixel. Row-major pixel order.
inline std::size_t insert_points(GlobalPointCloud& cloud, const PointBuffer& z_t, const Image& c_t, const Image& alpha,
                                 const Image& initial_confidence) {
  if (!alpha.same_size(c_t) || !alpha.same_size(initial_confidence) || alpha.width() != z_t.width() ||
      alpha.height() != z_t.height()) {
    throw std::invalid_argument("insert_points: resolution mismatch");
  }
  std::size_t n = 0;
  for (int y = 0; y < alpha.height(); ++y) {
    for (int x = 0; x < alpha.width(); ++x) {
      if (!(alpha(x, y) >= 0.5) || !z_t.valid(x, y)) continue;
      cloud.add(z_t.at(x, y), Eigen::Vector3d(c_t(x, y, 0), c_t(x, y, 1), c_t(x, y, 2)), initial_confidence(x, y));
      ++n;
    }
  }
  return n;
}

/// Removes every point with confidence strictly below `epsilon`.
inline std::size_t prune(GlobalPointCloud& cloud, double epsilon = kDefaultPruneEpsilon) {
  std::vector<std::uint8_t> keep(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) keep[i] = cloud.confidence()[i] < epsilon ? 0 : 1;
  return cloud.retain(keep);
}

/// ASCII PLY with per-vertex x y z (float), red green blue (uchar) and
/// confidence (float).
inline void write_ply(std::ostream& os, const GlobalPointCloud& cloud) {
  os << "ply\nformat ascii 1.0\n"
     << "element vertex " << cloud.size() << "\n"
     << "property float x\nproperty float y\nproperty float z\n"
     << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
     << "property float confidence\nend_header\n";
  auto to_byte = [](double c) {
    const double clamped = std::clamp(c, 0.0, 1.0);
    return static_cast<int>(std::lround(clamped * 255.0));
  };
  std::ostringstream line;
  line << std::setprecision(9);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.positions()[i];
    const auto& c = cloud.colors()[i];
    line.str("");
    line << static_cast<float>(p.x()) << ' ' << static_cast<float>(p.y()) << ' ' << static_cast<float>(p.z()) << ' '
         << to_byte(c.x()) << ' ' << to_byte(c.y()) << ' ' << to_byte(c.z()) << ' '
         << static_cast<float>(cloud.confidence()[i]) << '\n';
    os << line.str();
  }
}

inline void write_ply(const std::string& path, const GlobalPointCloud& cloud) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_ply(os, cloud);
  if (!os) throw std::runtime_error("failed writing " + path);
}

}  // namespace pcfuse
