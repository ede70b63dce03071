#pragma once

// Confidence weights from aleatoric uncertainty and the image-space fusion of
// the temporally blended depth with the observation.

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include "pcfuse/frame_path.hpp"
#include "pcfuse/image.hpp"

namespace pcfuse {

/// Upper clamp on uncertainty so exp(-s) stays representable.
inline constexpr double kMaxUncertainty = 20.0;
inline constexpr int kDefaultBoxSize = 5;
inline constexpr double kWeightSumFloor = 1e-12;

inline double clamp_uncertainty(double s) { return std::min(s, kMaxUncertainty); }

/// gamma = exp(-s), with s clamped above at kMaxUncertainty.
inline Image gamma_weight(const Image& s_obs) {
  Image out(s_obs.width(), s_obs.height());
  for (int y = 0; y < s_obs.height(); ++y)
    for (int x = 0; x < s_obs.width(); ++x) out(x, y) = std::exp(-clamp_uncertainty(s_obs(x, y)));
  return out;
}

/// k x k mean filter with edge-replicate padding, run separably.
inline Image box_filter(const Image& img, int k) {
  if (k < 1 || k % 2 == 0) throw std::invalid_argument("box_filter: kernel size must be odd and positive");
  const int r = k / 2;
  const int w = img.width();
  const int h = img.height();
  Image tmp(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int d = -r; d <= r; ++d) s += img(std::clamp(x + d, 0, w - 1), y);
      tmp(x, y) = s / k;
    }
  }
  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int d = -r; d <= r; ++d) s += tmp(x, std::clamp(y + d, 0, h - 1));
      out(x, y) = s / k;
    }
  }
  return out;
}

/// beta = gate * box(w_p) * exp(-s_fused). `gate` is the temporal mask term
/// multiplying the prior confidence; the pipeline decides whether that is
/// alpha or 1 - alpha. An empty `s_fused` means s = 0.
inline Image beta_weight(const Image& gate, const Image& w_p, const Image& s_fused, int box_k = kDefaultBoxSize) {
  require_same_size(gate, w_p, "beta_weight");
  const bool has_s = !s_fused.empty();
  if (has_s) require_same_size(gate, s_fused, "beta_weight");
  const Image filtered = box_filter(w_p, box_k);
  Image out(gate.width(), gate.height());
  for (int y = 0; y < gate.height(); ++y) {
    for (int x = 0; x < gate.width(); ++x) {
      const double conf = has_s ? std::exp(-clamp_uncertainty(s_fused(x, y))) : 1.0;
      out(x, y) = gate(x, y) * filtered(x, y) * conf;
    }
  }
  return out;
}

struct FusedDepth {
  Image depth;
  Mask fallback;  // 1 where beta + gamma was below kWeightSumFloor
  std::size_t fallback_count = 0;
};

/// d_o = (beta d_f + gamma d_t) / (beta + gamma). Pixels whose weights sum
/// below kWeightSumFloor fall back to d_t and are flagged. A hole on one side
/// yields the other side.
inline FusedDepth spatial_fuse(const Image& d_f, const Image& d_t, const Image& beta, const Image& gamma) {
  require_same_size(d_f, d_t, "spatial_fuse");
  require_same_size(d_f, beta, "spatial_fuse");
  require_same_size(d_f, gamma, "spatial_fuse");
  FusedDepth out{Image(d_f.width(), d_f.height(), 1, kHole), Mask(d_f.width(), d_f.height()), 0};
  for (int y = 0; y < d_f.height(); ++y) {
    for (int x = 0; x < d_f.width(); ++x) {
      const double df = d_f(x, y);
      const double dt = d_t(x, y);
      const bool f_ok = is_valid_depth(df);
      const bool t_ok = is_valid_depth(dt);
      if (!t_ok) {
        out.depth(x, y) = f_ok ? df : kHole;
        continue;
      }
      if (!f_ok) {
        out.depth(x, y) = dt;
        continue;
      }
      const double b = beta(x, y);
      const double g = gamma(x, y);
      const double wsum = b + g;
      if (!(wsum >= kWeightSumFloor)) {
        out.depth(x, y) = dt;
        out.fallback(x, y) = 1;
        ++out.fallback_count;
        continue;
      }
      out.depth(x, y) = (b * df + g * dt) / wsum;
    }
  }
  return out;
}

inline constexpr double kDefaultGradientScale = 1.0;

namespace detail {

/// Central-difference gradient magnitude of one channel (or of the channel
/// mean when channel < 0), with clamped indices at the border. Pixels whose
/// stencil touches a non-finite value get 0.
inline Image gradient_magnitude(const Image& img, int channel) {
  const int w = img.width();
  const int h = img.height();
  auto value = [&](int x, int y) {
    x = std::clamp(x, 0, w - 1);
    y = std::clamp(y, 0, h - 1);
    if (channel >= 0) return img(x, y, channel);
    double s = 0.0;
    for (int c = 0; c < img.channels(); ++c) s += img(x, y, c);
    return s / img.channels();
  };
  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = 0.5 * (value(x + 1, y) - value(x - 1, y));
      const double gy = 0.5 * (value(x, y + 1) - value(x, y - 1));
      const double m = std::sqrt(gx * gx + gy * gy);
      out(x, y) = std::isfinite(m) ? m : 0.0;
    }
  }
  return out;
}

inline void normalize_by_max(Image& img) {
  double mx = 0.0;
  for (double v : img.data()) mx = std::max(mx, v);
  if (mx <= 0.0) return;
  for (double& v : img.data()) v /= mx;
}

}  // namespace detail

/// Heuristic uncertainty: high where depth changes but color does not.
///
///   s = scale * |grad d| / max|grad d| * (1 - |grad I| / max|grad I|)
///
/// with I the channel-mean intensity, central differences, and s clamped to
/// [0, kMaxUncertainty]. Hole pixels get s = 0.
inline Image gradient_uncertainty(const Image& d, const Image& c, double scale = kDefaultGradientScale) {
  require_same_size(d, c, "gradient_uncertainty");
  Image depth_grad = detail::gradient_magnitude(d, 0);
  Image color_grad = detail::gradient_magnitude(c, -1);
  detail::normalize_by_max(depth_grad);
  detail::normalize_by_max(color_grad);
  Image s(d.width(), d.height());
  for (int y = 0; y < d.height(); ++y) {
    for (int x = 0; x < d.width(); ++x) {
      if (!is_valid_depth(d(x, y))) continue;
      s(x, y) = std::clamp(scale * depth_grad(x, y) * (1.0 - color_grad(x, y)), 0.0, kMaxUncertainty);
    }
  }
  return s;
}

/// Which image the uncertainty is requested for.
enum class UncertaintyRole { observation, fused };

struct UncertaintyInputs {
  int frame = 0;
  UncertaintyRole role = UncertaintyRole::observation;
  const Image* depth = nullptr;
  const Image* color = nullptr;
  const Image* file_map = nullptr;  // optional pre-loaded map for this role
};

/// Source of the aleatoric uncertainty s.
struct UncertaintyProvider {
  enum class Kind { gradient, none, file };

  Kind kind = Kind::gradient;
  double scale = kDefaultGradientScale;
  std::string observation_template;  // printf-style, file kind
  std::string fused_template;        // printf-style, file kind
  /// File values are confidences exp(-s) rather than s.
  bool file_is_confidence = false;
  std::function<Image(const std::string&)> loader;

  static UncertaintyProvider gradient(double scale = kDefaultGradientScale) {
    UncertaintyProvider p;
    p.kind = Kind::gradient;
    p.scale = scale;
    return p;
  }
  static UncertaintyProvider none() {
    UncertaintyProvider p;
    p.kind = Kind::none;
    return p;
  }
  static UncertaintyProvider file(std::string obs_template = {}, std::string fused_template = {},
                                  bool is_confidence = false) {
    UncertaintyProvider p;
    p.kind = Kind::file;
    p.observation_template = std::move(obs_template);
    p.fused_template = std::move(fused_template);
    p.file_is_confidence = is_confidence;
    return p;
  }

  Image compute(const UncertaintyInputs& in) const {
    switch (kind) {
      case Kind::gradient:
        return gradient_uncertainty(*in.depth, *in.color, scale);
      case Kind::none:
        return Image(in.depth->width(), in.depth->height(), 1, 0.0);
      case Kind::file:
        break;
    }
    Image raw;
    const std::string& tmpl = in.role == UncertaintyRole::observation ? observation_template : fused_template;
    if (in.file_map != nullptr && !in.file_map->empty()) {
      raw = *in.file_map;
    } else if (!tmpl.empty() && loader) {
      raw = loader(format_frame_path(tmpl, in.frame));
    } else if (in.role == UncertaintyRole::fused && !observation_template.empty() && loader) {
      raw = loader(format_frame_path(observation_template, in.frame));
    } else {
      throw std::invalid_argument("file uncertainty: no map available for frame " + std::to_string(in.frame));
    }
    require_same_size(raw, *in.depth, "file uncertainty");
    if (raw.channels() != 1) throw std::invalid_argument("file uncertainty: expected a single-channel image");
    Image s(raw.width(), raw.height());
    for (int y = 0; y < raw.height(); ++y) {
      for (int x = 0; x < raw.width(); ++x) {
        double v = raw(x, y);
        if (file_is_confidence) v = v > 0.0 ? -std::log(v) : kMaxUncertainty;
        s(x, y) = std::isfinite(v) ? clamp_uncertainty(v) : kMaxUncertainty;
      }
    }
    return s;
  }
};

}  // namespace pcfuse
