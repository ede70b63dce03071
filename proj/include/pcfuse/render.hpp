#pragma once

// Rendering the global point cloud into a camera: Z-buffered nearest-pixel
// splatting on a supersampled grid, then background removal and hole filling
// on the reduced image.

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "pcfuse/geometry.hpp"
#include "pcfuse/image.hpp"
#include "pcfuse/pointcloud.hpp"

namespace pcfuse {

/// Depth, color and confidence of the point cloud as seen from one camera.
/// Holes have depth kHole; their color and confidence are zero.
struct PriorProjection {
  Image depth;       // 1 channel
  Image color;       // 3 channels
  Image confidence;  // 1 channel

  PriorProjection() = default;
  PriorProjection(int width, int height)
      : depth(width, height, 1, kHole), color(width, height, 3, 0.0), confidence(width, height, 1, 0.0) {}

  int width() const { return depth.width(); }
  int height() const { return depth.height(); }
  bool is_hole(int x, int y) const { return !is_valid_depth(depth(x, y)); }

  void clear_pixel(int x, int y) {
    depth(x, y) = kHole;
    for (int c = 0; c < 3; ++c) color(x, y, c) = 0.0;
    confidence(x, y) = 0.0;
  }

  std::size_t hole_count() const {
    std::size_t n = 0;
    for (int y = 0; y < height(); ++y)
      for (int x = 0; x < width(); ++x) n += is_hole(x, y) ? 1 : 0;
    return n;
  }
};

inline constexpr int kDefaultSupersample = 2;
inline constexpr int kDefaultFillIterations = 2;
inline constexpr double kDefaultBackgroundRatio = 1.5;

/// Index of the supersampled cell containing continuous pixel coordinate
/// `coord` when every output pixel is split into `factor` cells per axis.
inline int supersampled_cell(double coord, int factor) {
  return static_cast<int>(std::floor(factor * (coord + 0.5)));
}

/// Z-buffered nearest-pixel splat of every point in front of the camera.
///
/// Points are rasterized onto a (factor*W) x (factor*H) grid; a point wins a
/// cell only if its depth is strictly smaller than the current one, so exact
/// ties keep the lowest point index. Each output pixel then takes the
/// minimum-depth covered cell of its factor x factor block (first in
/// row-major order on ties).
inline PriorProjection splat(const GlobalPointCloud& cloud, const CameraPose& pose, const CameraIntrinsics& k,
                             int supersample = kDefaultSupersample) {
  if (supersample < 1) throw std::invalid_argument("splat: supersample must be >= 1");
  const int sw = k.width * supersample;
  const int sh = k.height * supersample;
  std::vector<double> zbuf(static_cast<std::size_t>(sw) * sh, kHole);
  std::vector<std::int64_t> owner(zbuf.size(), -1);

  const auto& positions = cloud.positions();
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const Projection proj = project_point(positions[i], pose, k);
    if (!proj.in_front) continue;
    const int cx = supersampled_cell(proj.pixel.x(), supersample);
    const int cy = supersampled_cell(proj.pixel.y(), supersample);
    if (cx < 0 || cy < 0 || cx >= sw || cy >= sh) continue;
    const std::size_t cell = static_cast<std::size_t>(cy) * sw + cx;
    if (proj.depth < zbuf[cell]) {
      zbuf[cell] = proj.depth;
      owner[cell] = static_cast<std::int64_t>(i);
    }
  }

  PriorProjection out(k.width, k.height);
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      std::int64_t best = -1;
      double best_depth = kHole;
      for (int sy = 0; sy < supersample; ++sy) {
        for (int sx = 0; sx < supersample; ++sx) {
          const std::size_t cell = static_cast<std::size_t>(y * supersample + sy) * sw + (x * supersample + sx);
          if (owner[cell] >= 0 && zbuf[cell] < best_depth) {
            best_depth = zbuf[cell];
            best = owner[cell];
          }
        }
      }
      if (best < 0) continue;
      out.depth(x, y) = best_depth;
      const auto& c = cloud.colors()[static_cast<std::size_t>(best)];
      for (int ch = 0; ch < 3; ++ch) out.color(x, y, ch) = c[ch];
      out.confidence(x, y) = cloud.confidence()[static_cast<std::size_t>(best)];
    }
  }
  return out;
}

namespace detail {

/// Median of a non-empty list; even counts average the two middle values.
inline double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

struct Neighbor {
  double depth;
  int x;
  int y;
};

inline std::vector<Neighbor> valid_neighbors(const PriorProjection& proj, int x, int y) {
  std::vector<Neighbor> out;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      if (dx == 0 && dy == 0) continue;
      const int nx = x + dx;
      const int ny = y + dy;
      if (!proj.depth.in_bounds(nx, ny) || proj.is_hole(nx, ny)) continue;
      out.push_back({proj.depth(nx, ny), nx, ny});
    }
  }
  return out;
}

}  // namespace detail

/// Simplified near-neighbor hole filling. A hole with at least three valid
/// 8-neighbors takes the median depth of the nearer half of them (rounded
/// up), and the confidence-weighted mean color and confidence of that half.
/// Each iteration reads only the previous iteration's result.
inline PriorProjection fill_holes(const PriorProjection& proj, int max_iters = kDefaultFillIterations) {
  PriorProjection current = proj;
  for (int iter = 0; iter < max_iters; ++iter) {
    PriorProjection next = current;
    bool changed = false;
    for (int y = 0; y < current.height(); ++y) {
      for (int x = 0; x < current.width(); ++x) {
        if (!current.is_hole(x, y)) continue;
        auto nbrs = detail::valid_neighbors(current, x, y);
        if (nbrs.size() < 3) continue;
        std::stable_sort(nbrs.begin(), nbrs.end(),
                         [](const detail::Neighbor& a, const detail::Neighbor& b) { return a.depth < b.depth; });
        nbrs.resize((nbrs.size() + 1) / 2);

        std::vector<double> depths;
        double wsum = 0.0;
        for (const auto& n : nbrs) {
          depths.push_back(n.depth);
          wsum += current.confidence(n.x, n.y);
        }
        std::array<double, 3> color{};
        double conf = 0.0;
        for (const auto& n : nbrs) {
          const double w = wsum > 0.0 ? current.confidence(n.x, n.y) / wsum : 1.0 / nbrs.size();
          for (int c = 0; c < 3; ++c) color[c] += w * current.color(n.x, n.y, c);
          conf += w * current.confidence(n.x, n.y);
        }
        next.depth(x, y) = detail::median(std::move(depths));
        for (int c = 0; c < 3; ++c) next.color(x, y, c) = color[c];
        next.confidence(x, y) = conf;
        changed = true;
      }
    }
    current = std::move(next);
    if (!changed) break;
  }
  return current;
}

/// Demotes to a hole every valid pixel deeper than `ratio_threshold` times
/// the median depth of its valid 8-neighbors. Never creates valid pixels.
inline PriorProjection remove_background(const PriorProjection& proj, double ratio_threshold = kDefaultBackgroundRatio) {
  PriorProjection out = proj;
  for (int y = 0; y < proj.height(); ++y) {
    for (int x = 0; x < proj.width(); ++x) {
      if (proj.is_hole(x, y)) continue;
      const auto nbrs = detail::valid_neighbors(proj, x, y);
      if (nbrs.empty()) continue;
      std::vector<double> depths;
      depths.reserve(nbrs.size());
      for (const auto& n : nbrs) depths.push_back(n.depth);
      if (proj.depth(x, y) > ratio_threshold * detail::median(std::move(depths))) out.clear_pixel(x, y);
    }
  }
  return out;
}

}  // namespace pcfuse
