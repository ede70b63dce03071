#pragma once

// Dynamics mask and temporal blending of the observation with the prior.
// Mask convention: alpha = 1 trusts the observation (dynamic / newly seen),
// alpha = 0 trusts the prior (static).

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

#include "pcfuse/frame_path.hpp"
#include "pcfuse/image.hpp"
#include "pcfuse/render.hpp"

namespace pcfuse {

inline constexpr double kDefaultDepthResidualThreshold = 0.1;
inline constexpr double kDefaultColorResidualThreshold = 0.1;

/// Hand-tuned residual test: alpha = 1 where the prior is a hole, where the
/// relative depth residual exceeds `thresh_depth`, or where the RGB distance
/// exceeds `thresh_color`.
inline Image residual_mask(const Image& d_t, const PriorProjection& prior, const Image& c_t,
                           double thresh_depth = kDefaultDepthResidualThreshold,
                           double thresh_color = kDefaultColorResidualThreshold) {
  require_same_size(d_t, prior.depth, "residual_mask");
  require_same_size(d_t, c_t, "residual_mask");
  Image alpha(d_t.width(), d_t.height(), 1, 0.0);
  for (int y = 0; y < d_t.height(); ++y) {
    for (int x = 0; x < d_t.width(); ++x) {
      if (prior.is_hole(x, y)) {
        alpha(x, y) = 1.0;
        continue;
      }
      const double dp = prior.depth(x, y);
      const double dt = d_t(x, y);
      if (!is_valid_depth(dt)) continue;
      double color_dist2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double diff = c_t(x, y, c) - prior.color(x, y, c);
        color_dist2 += diff * diff;
      }
      if (std::abs(dt - dp) / dp > thresh_depth || std::sqrt(color_dist2) > thresh_color) alpha(x, y) = 1.0;
    }
  }
  return alpha;
}

/// Pointwise-better indicator against ground truth:
/// alpha = 1 where |d_t - g| < |d_p - g|. Prior holes give 1, observation
/// holes 0, and pixels without ground truth 1.
inline Image oracle_mask(const Image& d_t, const Image& d_p, const Image& g_t) {
  if (g_t.empty()) throw std::invalid_argument("oracle_mask: ground truth depth is required");
  require_same_size(d_t, d_p, "oracle_mask");
  require_same_size(d_t, g_t, "oracle_mask");
  Image alpha(d_t.width(), d_t.height(), 1, 0.0);
  for (int y = 0; y < d_t.height(); ++y) {
    for (int x = 0; x < d_t.width(); ++x) {
      const double dt = d_t(x, y);
      const double dp = d_p(x, y);
      const double g = g_t(x, y);
      if (!is_valid_depth(dp)) {
        alpha(x, y) = 1.0;
      } else if (!is_valid_depth(dt)) {
        alpha(x, y) = 0.0;
      } else if (!is_valid_depth(g)) {
        alpha(x, y) = 1.0;
      } else {
        alpha(x, y) = std::abs(dt - g) < std::abs(dp - g) ? 1.0 : 0.0;
      }
    }
  }
  return alpha;
}

/// d_f = alpha d_t + (1 - alpha) d_p. Where the prior is a hole the output is
/// d_t; where the observation is a hole it is d_p.
inline Image temporal_blend(const Image& d_t, const Image& d_p, const Image& alpha) {
  require_same_size(d_t, d_p, "temporal_blend");
  require_same_size(d_t, alpha, "temporal_blend");
  Image out(d_t.width(), d_t.height(), 1, kHole);
  for (int y = 0; y < d_t.height(); ++y) {
    for (int x = 0; x < d_t.width(); ++x) {
      const double dt = d_t(x, y);
      const double dp = d_p(x, y);
      const bool t_ok = is_valid_depth(dt);
      const bool p_ok = is_valid_depth(dp);
      if (t_ok && p_ok) {
        const double a = alpha(x, y);
        out(x, y) = dt == dp ? dt : a * dt + (1.0 - a) * dp;
      } else if (t_ok) {
        out(x, y) = dt;
      } else if (p_ok) {
        out(x, y) = dp;
      }
    }
  }
  return out;
}

inline constexpr double kBootstrapConfidence = 1.0;

/// Prior used for the very first frame: the observation itself with a
/// constant confidence. Holes in d_0 stay holes.
inline PriorProjection bootstrap_prior(const Image& d_0, const Image& c_0, double initial_confidence = kBootstrapConfidence) {
  require_same_size(d_0, c_0, "bootstrap_prior");
  PriorProjection prior(d_0.width(), d_0.height());
  for (int y = 0; y < d_0.height(); ++y) {
    for (int x = 0; x < d_0.width(); ++x) {
      if (!is_valid_depth(d_0(x, y))) continue;
      prior.depth(x, y) = d_0(x, y);
      for (int c = 0; c < 3; ++c) prior.color(x, y, c) = c_0(x, y, c);
      prior.confidence(x, y) = initial_confidence;
    }
  }
  return prior;
}

/// Sets alpha to 1 wherever the prior carries no depth.
inline void force_alpha_at_prior_holes(Image& alpha, const PriorProjection& prior) {
  require_same_size(alpha, prior.depth, "force_alpha_at_prior_holes");
  for (int y = 0; y < alpha.height(); ++y)
    for (int x = 0; x < alpha.width(); ++x)
      if (prior.is_hole(x, y)) alpha(x, y) = 1.0;
}

/// 3x3 mean with edge replication, result clamped to [0, 1].
inline Image blur_mask(const Image& alpha) {
  Image out(alpha.width(), alpha.height());
  for (int y = 0; y < alpha.height(); ++y) {
    for (int x = 0; x < alpha.width(); ++x) {
      double s = 0.0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          s += alpha(std::clamp(x + dx, 0, alpha.width() - 1), std::clamp(y + dy, 0, alpha.height() - 1));
      out(x, y) = std::clamp(s / 9.0, 0.0, 1.0);
    }
  }
  return out;
}

inline void clamp_unit(Image& img) {
  for (double& v : img.data()) v = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 1.0;
}

/// Everything a mask provider may look at for one frame.
struct MaskInputs {
  int frame = 0;
  const Image* d_t = nullptr;
  const Image* c_t = nullptr;
  const PriorProjection* prior = nullptr;
  const Image* ground_truth = nullptr;  // optional
  const Image* file_mask = nullptr;     // optional, pre-loaded per-frame mask
};

/// Source of the blend mask alpha.
struct MaskProvider {
  enum class Kind { residual, oracle, file };

  Kind kind = Kind::residual;
  double thresh_depth = kDefaultDepthResidualThreshold;
  double thresh_color = kDefaultColorResidualThreshold;
  /// printf-style per-frame path (e.g. "masks/%06d.pfm"); empty means the
  /// mask comes in through MaskInputs::file_mask.
  std::string path_template;
  bool blur = false;
  /// Loads a grayscale mask from disk; set by the I/O layer for file masks.
  std::function<Image(const std::string&)> loader;

  static MaskProvider residual(double td = kDefaultDepthResidualThreshold, double tc = kDefaultColorResidualThreshold) {
    MaskProvider p;
    p.kind = Kind::residual;
    p.thresh_depth = td;
    p.thresh_color = tc;
    return p;
  }
  static MaskProvider oracle() {
    MaskProvider p;
    p.kind = Kind::oracle;
    return p;
  }
  static MaskProvider file(std::string path_template = {}) {
    MaskProvider p;
    p.kind = Kind::file;
    p.path_template = std::move(path_template);
    return p;
  }

  bool needs_ground_truth() const { return kind == Kind::oracle; }

  Image compute(const MaskInputs& in) const {
    Image alpha;
    switch (kind) {
      case Kind::residual:
        alpha = residual_mask(*in.d_t, *in.prior, *in.c_t, thresh_depth, thresh_color);
        break;
      case Kind::oracle:
        if (in.ground_truth == nullptr || in.ground_truth->empty()) {
          throw std::invalid_argument("oracle mask: frame " + std::to_string(in.frame) + " has no ground truth");
        }
        alpha = oracle_mask(*in.d_t, in.prior->depth, *in.ground_truth);
        break;
      case Kind::file:
        if (in.file_mask != nullptr && !in.file_mask->empty()) {
          alpha = *in.file_mask;
        } else if (!path_template.empty() && loader) {
          alpha = loader(format_frame_path(path_template, in.frame));
        } else {
          throw std::invalid_argument("file mask: no mask available for frame " + std::to_string(in.frame));
        }
        require_same_size(alpha, *in.d_t, "file mask");
        if (alpha.channels() != 1) throw std::invalid_argument("file mask: expected a single-channel image");
        clamp_unit(alpha);
        break;
    }
    if (blur) alpha = blur_mask(alpha);
    return alpha;
  }
};

}  // namespace pcfuse
