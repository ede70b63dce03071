#pragma once

// Temporal and spatial depth-quality metrics.
//
// Temporal metrics compare consecutive frames t, t+1. The next frame is
// brought into frame t either with an optical flow O_{t->t+1} (OPW, RTC) or
// with the depth of frame t plus both camera poses (SC), and every pixel is
// weighted by the occlusion term M = exp(-kappa * ||c_w - c_t||_2).

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcfuse/geometry.hpp"
#include "pcfuse/image.hpp"

namespace pcfuse {

inline constexpr double kDefaultKappa = 50.0;
inline constexpr double kDefaultTau = 1.01;
inline constexpr double kSintelMaxFlow = 250.0;
inline constexpr double kSintelMaxDepth = 30.0;

struct EvalOptions {
  double kappa = kDefaultKappa;
  double tau = kDefaultTau;
  /// Restrict evaluation to pixels with flow <= max_flow px and depth <= max_depth m.
  bool sintel_cutoffs = false;
  double max_flow = kSintelMaxFlow;
  double max_depth = kSintelMaxDepth;
  /// Occlusion weight below which the gated RTC variant drops a pixel.
  double rtc_gate = 0.5;
  int flow_radius = 2;
  int flow_search = 3;
  bool compute_tcm = true;
};

class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline double color_distance(const Image& a, int ax, int ay, std::span<const double> b) {
  double s = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    const double d = a(ax, ay, c) - b[c];
    s += d * d;
  }
  return std::sqrt(s);
}

/// Reference depth used for the depth cutoff: ground truth when available.
inline bool passes_depth_cutoff(const EvalOptions& opt, const Image* gt, const Image& d, int x, int y) {
  if (!opt.sintel_cutoffs) return true;
  const double ref = gt != nullptr && !gt->empty() ? (*gt)(x, y) : d(x, y);
  return ref <= opt.max_depth;
}

inline bool passes_flow_cutoff(const EvalOptions& opt, double fu, double fv) {
  if (!opt.sintel_cutoffs) return true;
  return std::sqrt(fu * fu + fv * fv) <= opt.max_flow;
}

}  // namespace detail

/// Per-pixel quantities for one frame pair, shared by OPW and RTC.
struct WarpedPair {
  Image warped_depth;  // d^{t+1} brought into frame t, NaN where invalid
  Image weight;        // occlusion weight M
  Mask valid;
  std::size_t valid_count = 0;
};

/// Occlusion weight M = exp(-kappa * ||c_w - c||_2) for every pixel.
inline Image occlusion_weight(const Image& warped_color, const Image& color, double kappa) {
  require_same_size(warped_color, color, "occlusion_weight");
  Image m(color.width(), color.height(), 1, 0.0);
  for (int y = 0; y < color.height(); ++y) {
    for (int x = 0; x < color.width(); ++x) {
      double s = 0.0;
      for (int c = 0; c < color.channels(); ++c) {
        const double d = warped_color(x, y, c) - color(x, y, c);
        s += d * d;
      }
      m(x, y) = std::exp(-kappa * std::sqrt(s));
    }
  }
  return m;
}

/// Backward-warps the next frame into frame t with the flow and collects the
/// occlusion weight and validity of every pixel.
inline WarpedPair flow_warp_pair(const Image& d0, const Image& d1, const Image& c0, const Image& c1, const Image& flow,
                                 const EvalOptions& opt, const Image* gt0 = nullptr) {
  require_same_size(d0, d1, "flow_warp_pair");
  require_same_size(d0, c0, "flow_warp_pair");
  require_same_size(d0, c1, "flow_warp_pair");
  require_same_size(d0, flow, "flow_warp_pair");
  WarpedPair out;
  out.warped_depth = backward_warp_flow(d1, flow);
  const Image warped_color = backward_warp_flow(c1, flow);
  out.weight = Image(d0.width(), d0.height(), 1, 0.0);
  out.valid = Mask(d0.width(), d0.height());
  for (int y = 0; y < d0.height(); ++y) {
    for (int x = 0; x < d0.width(); ++x) {
      const double dw = out.warped_depth(x, y);
      if (!is_valid_depth(d0(x, y)) || !is_valid_depth(dw) || !std::isfinite(warped_color(x, y, 0))) continue;
      if (!detail::passes_flow_cutoff(opt, flow(x, y, 0), flow(x, y, 1))) continue;
      if (!detail::passes_depth_cutoff(opt, gt0, d0, x, y)) continue;
      out.weight(x, y) = std::exp(-opt.kappa * detail::color_distance(c0, x, y, warped_color.pixel(x, y)));
      out.valid(x, y) = 1;
      ++out.valid_count;
    }
  }
  return out;
}

/// Mean of M |d_w - d| over the valid pixels of one pair; empty if none.
inline std::optional<double> weighted_warp_error(const WarpedPair& pair, const Image& d0) {
  if (pair.valid_count == 0) return std::nullopt;
  double s = 0.0;
  for (int y = 0; y < d0.height(); ++y)
    for (int x = 0; x < d0.width(); ++x)
      if (pair.valid(x, y)) s += pair.weight(x, y) * std::abs(pair.warped_depth(x, y) - d0(x, y));
  return s / static_cast<double>(pair.valid_count);
}

struct RtcCounts {
  std::size_t consistent = 0;
  std::size_t total = 0;
  std::size_t gated_consistent = 0;
  std::size_t gated_total = 0;
};

/// Literal indicator M * max(d_w/d, d/d_w) < tau, plus the gated variant that
/// drops pixels with M < gate and tests max(d_w/d, d/d_w) < tau on the rest.
inline RtcCounts rtc_counts(const WarpedPair& pair, const Image& d0, const EvalOptions& opt) {
  RtcCounts c;
  for (int y = 0; y < d0.height(); ++y) {
    for (int x = 0; x < d0.width(); ++x) {
      if (!pair.valid(x, y)) continue;
      const double dw = pair.warped_depth(x, y);
      const double d = d0(x, y);
      const double ratio = std::max(dw / d, d / dw);
      const double m = pair.weight(x, y);
      ++c.total;
      if (m * ratio < opt.tau) ++c.consistent;
      if (m >= opt.rtc_gate) {
        ++c.gated_total;
        if (ratio < opt.tau) ++c.gated_consistent;
      }
    }
  }
  return c;
}

namespace detail {

inline void require_sequence(std::size_t n, const char* what) {
  if (n < 2) throw MetricError(std::string(what) + ": need at least 2 frames");
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) throw MetricError("no valid frame pairs");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline const Image* optional_at(std::span<const Image> v, std::size_t i) {
  return i < v.size() && !v[i].empty() ? &v[i] : nullptr;
}

}  // namespace detail

/// Optical-flow warping error: mean over pairs of mean_p M |d_w^{t+1} - d^t|.
/// flows[t] is O_{t->t+1}. Ground truth, when given, only drives the depth cutoff.
inline double opw(std::span<const Image> depths, std::span<const Image> colors, std::span<const Image> flows,
                  const EvalOptions& opt = {}, std::span<const Image> gts = {}) {
  detail::require_sequence(depths.size(), "OPW");
  if (colors.size() != depths.size() || flows.size() + 1 < depths.size()) {
    throw MetricError("OPW: need one color per frame and one flow per consecutive pair");
  }
  std::vector<double> per_pair;
  for (std::size_t t = 0; t + 1 < depths.size(); ++t) {
    const auto pair = flow_warp_pair(depths[t], depths[t + 1], colors[t], colors[t + 1], flows[t], opt,
                                     detail::optional_at(gts, t));
    if (auto e = weighted_warp_error(pair, depths[t])) per_pair.push_back(*e);
  }
  return detail::mean_of(per_pair);
}

enum class RtcMode { literal, gated };

/// Relative temporal consistency: fraction of valid pixels over all pairs
/// passing the ratio test.
inline double rtc(std::span<const Image> depths, std::span<const Image> colors, std::span<const Image> flows,
                  const EvalOptions& opt = {}, RtcMode mode = RtcMode::literal, std::span<const Image> gts = {}) {
  detail::require_sequence(depths.size(), "RTC");
  if (colors.size() != depths.size() || flows.size() + 1 < depths.size()) {
    throw MetricError("RTC: need one color per frame and one flow per consecutive pair");
  }
  std::size_t hit = 0;
  std::size_t total = 0;
  for (std::size_t t = 0; t + 1 < depths.size(); ++t) {
    const auto pair = flow_warp_pair(depths[t], depths[t + 1], colors[t], colors[t + 1], flows[t], opt,
                                     detail::optional_at(gts, t));
    const auto c = rtc_counts(pair, depths[t], opt);
    hit += mode == RtcMode::literal ? c.consistent : c.gated_consistent;
    total += mode == RtcMode::literal ? c.total : c.gated_total;
  }
  if (total == 0) throw MetricError("RTC: no valid pixels");
  return static_cast<double>(hit) / static_cast<double>(total);
}

/// Self-consistency warp of one pair: for each pixel p of frame t, lift it
/// with d^t, project into frame t+1 at x^, sample d^{t+1} and c^{t+1}
/// bilinearly at x^, lift that sample back to world and express its depth in
/// camera t. Returns the warped depth (NaN where invalid) and the weights.
inline WarpedPair pose_warp_pair(const Image& d0, const Image& d1, const Image& c0, const Image& c1,
                                 const CameraPose& pose0, const CameraPose& pose1, const CameraIntrinsics& k,
                                 const EvalOptions& opt, const Image* gt0 = nullptr) {
  require_same_size(d0, d1, "pose_warp_pair");
  require_same_size(d0, c0, "pose_warp_pair");
  require_same_size(d0, c1, "pose_warp_pair");
  if (!k.matches(d0)) throw MetricError("SC: intrinsics do not match the depth maps");
  WarpedPair out;
  out.warped_depth = Image(d0.width(), d0.height(), 1, std::numeric_limits<double>::quiet_NaN());
  out.weight = Image(d0.width(), d0.height(), 1, 0.0);
  out.valid = Mask(d0.width(), d0.height());
  std::vector<double> color(c1.channels());
  for (int y = 0; y < d0.height(); ++y) {
    for (int x = 0; x < d0.width(); ++x) {
      const double d = d0(x, y);
      if (!is_valid_depth(d) || !detail::passes_depth_cutoff(opt, gt0, d0, x, y)) continue;
      const Eigen::Vector3d world = pose0.to_world(backproject_pixel(x, y, d, k));
      const Projection proj = project_point(world, pose1, k);
      if (!proj.in_front) continue;
      const double u = proj.pixel.x();
      const double v = proj.pixel.y();
      if (!detail::passes_flow_cutoff(opt, u - x, v - y)) continue;
      const auto z1 = bilinear_sample(d1, u, v);
      if (!z1 || !is_valid_depth(*z1) || !bilinear_sample(c1, u, v, color)) continue;
      const Eigen::Vector3d back = pose1.to_world(backproject_pixel(u, v, *z1, k));
      const double dw = pose0.to_camera(back).z();
      if (!is_valid_depth(dw)) continue;
      out.warped_depth(x, y) = dw;
      out.weight(x, y) = std::exp(-opt.kappa * detail::color_distance(c0, x, y, color));
      out.valid(x, y) = 1;
      ++out.valid_count;
    }
  }
  return out;
}

/// Self-consistency: OPW with the correspondence taken from the estimated
/// depth and the camera poses instead of optical flow.
inline double sc(std::span<const Image> depths, std::span<const Image> colors, std::span<const CameraPose> poses,
                 const CameraIntrinsics& k, const EvalOptions& opt = {}, std::span<const Image> gts = {}) {
  detail::require_sequence(depths.size(), "SC");
  if (colors.size() != depths.size() || poses.size() != depths.size()) {
    throw MetricError("SC: need one color and one pose per frame");
  }
  std::vector<double> per_pair;
  for (std::size_t t = 0; t + 1 < depths.size(); ++t) {
    const auto pair = pose_warp_pair(depths[t], depths[t + 1], colors[t], colors[t + 1], poses[t], poses[t + 1], k,
                                     opt, detail::optional_at(gts, t));
    if (auto e = weighted_warp_error(pair, depths[t])) per_pair.push_back(*e);
  }
  return detail::mean_of(per_pair);
}

// ---------------------------------------------------------------------------
// SSIM

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

namespace detail {

inline std::array<double, kSsimWindow> gaussian_window() {
  std::array<double, kSsimWindow> w{};
  double s = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    w[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    s += w[i];
  }
  for (double& v : w) v /= s;
  return w;
}

/// Separable Gaussian filter over every fully contained 11 x 11 window.
inline std::vector<double> filter_valid(const std::vector<double>& img, int w, int h) {
  static const auto kernel = gaussian_window();
  const int ow = w - kSsimWindow + 1;
  const int oh = h - kSsimWindow + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kSsimWindow; ++i) s += kernel[i] * img[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kSsimWindow; ++i) s += kernel[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

}  // namespace detail

/// Mean structural similarity of two single-channel images over all 11 x 11
/// Gaussian (sigma 1.5) windows, C1 = (0.01 L)^2, C2 = (0.03 L)^2, where L is
/// the value range of the pair (1 when both are the same constant).
/// `channel` selects the plane of multi-channel inputs.
inline double ssim(const Image& a, const Image& b, int channel = 0) {
  require_same_size(a, b, "ssim");
  if (a.width() < kSsimWindow || a.height() < kSsimWindow) {
    throw MetricError("ssim: images smaller than the 11x11 window");
  }
  const int w = a.width();
  const int h = a.height();
  const std::size_t n = a.pixel_count();
  std::vector<double> va(n), vb(n), aa(n), bb(n), ab(n);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      va[i] = a(x, y, channel);
      vb[i] = b(x, y, channel);
      if (!std::isfinite(va[i]) || !std::isfinite(vb[i])) throw MetricError("ssim: non-finite input");
      lo = std::min({lo, va[i], vb[i]});
      hi = std::max({hi, va[i], vb[i]});
      aa[i] = va[i] * va[i];
      bb[i] = vb[i] * vb[i];
      ab[i] = va[i] * vb[i];
    }
  const double range = hi > lo ? hi - lo : 1.0;
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);

  const auto mu_a = detail::filter_valid(va, w, h);
  const auto mu_b = detail::filter_valid(vb, w, h);
  const auto e_aa = detail::filter_valid(aa, w, h);
  const auto e_bb = detail::filter_valid(bb, w, h);
  const auto e_ab = detail::filter_valid(ab, w, h);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i];
    const double mb = mu_b[i];
    const double var_a = e_aa[i] - ma * ma;
    const double var_b = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

// ---------------------------------------------------------------------------
// Block-matching flow (stand-in flow operator for TCM on depth maps).

namespace detail {

inline Image downsample2(const Image& img) {
  Image out(img.width() / 2, img.height() / 2);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      out(x, y) = 0.25 * (img(2 * x, 2 * y) + img(2 * x + 1, 2 * y) + img(2 * x, 2 * y + 1) + img(2 * x + 1, 2 * y + 1));
  return out;
}

inline double patch_sad(const Image& a, const Image& b, int x, int y, int dx, int dy, int radius) {
  const int w = a.width();
  const int h = a.height();
  double s = 0.0;
  for (int j = -radius; j <= radius; ++j) {
    const int ay = std::clamp(y + j, 0, h - 1);
    const int by = std::clamp(y + dy + j, 0, h - 1);
    for (int i = -radius; i <= radius; ++i) {
      const int ax = std::clamp(x + i, 0, w - 1);
      const int bx = std::clamp(x + dx + i, 0, w - 1);
      s += std::abs(a(ax, ay) - b(bx, by));
    }
  }
  return s;
}

/// Exhaustive SAD search around an optional integer initial flow.
inline Image block_match(const Image& a, const Image& b, int radius, int search, const Image* guess) {
  Image flow(a.width(), a.height(), 2, 0.0);
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      int gx = 0;
      int gy = 0;
      if (guess != nullptr) {
        const int cx = std::min(x / 2, guess->width() - 1);
        const int cy = std::min(y / 2, guess->height() - 1);
        gx = 2 * static_cast<int>((*guess)(cx, cy, 0));
        gy = 2 * static_cast<int>((*guess)(cx, cy, 1));
      }
      double best = std::numeric_limits<double>::infinity();
      int best_dx = 0;
      int best_dy = 0;
      long best_norm = std::numeric_limits<long>::max();
      for (int sy = -search; sy <= search; ++sy) {
        for (int sx = -search; sx <= search; ++sx) {
          const int dx = gx + sx;
          const int dy = gy + sy;
          if (!a.in_bounds(x + dx, y + dy)) continue;
          const double cost = patch_sad(a, b, x, y, dx, dy, radius);
          const long norm = static_cast<long>(dx) * dx + static_cast<long>(dy) * dy;
          if (cost < best || (cost == best && norm < best_norm)) {
            best = cost;
            best_dx = dx;
            best_dy = dy;
            best_norm = norm;
          }
        }
      }
      flow(x, y, 0) = best_dx;
      flow(x, y, 1) = best_dy;
    }
  }
  return flow;
}

}  // namespace detail

/// Integer per-pixel flow from `a` to `b`: SAD over (2 radius + 1)^2 patches,
/// (2 search + 1)^2 candidates, coarse-to-fine over a 2-level pyramid. Ties
/// prefer the smaller displacement. Non-finite input values count as 0.
inline Image block_flow(const Image& a, const Image& b, int radius = 2, int search = 3) {
  require_same_size(a, b, "block_flow");
  if (a.channels() != 1 || b.channels() != 1) throw std::invalid_argument("block_flow: single-channel inputs only");
  auto sanitize = [](const Image& img) {
    Image out = img;
    for (double& v : out.data())
      if (!std::isfinite(v)) v = 0.0;
    return out;
  };
  const Image sa = sanitize(a);
  const Image sb = sanitize(b);
  if (sa.width() < 4 || sa.height() < 4) return detail::block_match(sa, sb, radius, search, nullptr);
  const Image coarse =
      detail::block_match(detail::downsample2(sa), detail::downsample2(sb), radius, search, nullptr);
  return detail::block_match(sa, sb, radius, search, &coarse);
}

// ---------------------------------------------------------------------------
// Ground-truth based temporal metrics.

namespace detail {

/// |d^t - d^{t+1}| with invalid / cut-off pixels zeroed in both maps.
inline std::pair<Image, Image> temporal_change_pair(const Image& d0, const Image& d1, const Image& g0, const Image& g1,
                                                    const Image* flow, const EvalOptions& opt) {
  Image dd(d0.width(), d0.height(), 1, 0.0);
  Image dg(d0.width(), d0.height(), 1, 0.0);
  for (int y = 0; y < d0.height(); ++y) {
    for (int x = 0; x < d0.width(); ++x) {
      if (!is_valid_depth(d0(x, y)) || !is_valid_depth(d1(x, y)) || !is_valid_depth(g0(x, y)) ||
          !is_valid_depth(g1(x, y)))
        continue;
      if (!passes_depth_cutoff(opt, &g0, d0, x, y)) continue;
      if (flow != nullptr && !passes_flow_cutoff(opt, (*flow)(x, y, 0), (*flow)(x, y, 1))) continue;
      dd(x, y) = std::abs(d0(x, y) - d1(x, y));
      dg(x, y) = std::abs(g0(x, y) - g1(x, y));
    }
  }
  return {std::move(dd), std::move(dg)};
}

inline Image sanitized_depth(const Image& d, const Image& g, const Image* flow, const EvalOptions& opt) {
  Image out(d.width(), d.height(), 1, 0.0);
  for (int y = 0; y < d.height(); ++y)
    for (int x = 0; x < d.width(); ++x) {
      if (!is_valid_depth(d(x, y)) || !is_valid_depth(g(x, y))) continue;
      if (!passes_depth_cutoff(opt, &g, d, x, y)) continue;
      if (flow != nullptr && !passes_flow_cutoff(opt, (*flow)(x, y, 0), (*flow)(x, y, 1))) continue;
      out(x, y) = d(x, y);
    }
  return out;
}

inline void require_gt(std::span<const Image> depths, std::span<const Image> gts, const char* what) {
  require_sequence(depths.size(), what);
  if (gts.size() != depths.size()) throw MetricError(std::string(what) + ": missing ground truth");
  for (const auto& g : gts)
    if (g.empty()) throw MetricError(std::string(what) + ": missing ground truth");
}

}  // namespace detail

/// SSIM of |d^t - d^{t+1}| against |g^t - g^{t+1}| for one pair.
inline double tcc_pair(const Image& d0, const Image& d1, const Image& g0, const Image& g1, const EvalOptions& opt = {},
                       const Image* flow = nullptr) {
  const auto [dd, dg] = detail::temporal_change_pair(d0, d1, g0, g1, flow, opt);
  return ssim(dd, dg);
}

/// Temporal change consistency, averaged over consecutive pairs.
inline double tcc(std::span<const Image> depths, std::span<const Image> gts, const EvalOptions& opt = {},
                  std::span<const Image> flows = {}) {
  detail::require_gt(depths, gts, "TCC");
  double s = 0.0;
  for (std::size_t t = 0; t + 1 < depths.size(); ++t)
    s += tcc_pair(depths[t], depths[t + 1], gts[t], gts[t + 1], opt, detail::optional_at(flows, t));
  return s / static_cast<double>(depths.size() - 1);
}

/// SSIM between the block flows of the depth pair and of the ground-truth
/// pair, averaged over the two flow channels.
inline double tcm_pair(const Image& d0, const Image& d1, const Image& g0, const Image& g1, const EvalOptions& opt = {},
                       const Image* flow = nullptr) {
  const Image fd = block_flow(detail::sanitized_depth(d0, g0, flow, opt), detail::sanitized_depth(d1, g1, nullptr, opt),
                              opt.flow_radius, opt.flow_search);
  const Image fg = block_flow(detail::sanitized_depth(g0, g0, flow, opt), detail::sanitized_depth(g1, g1, nullptr, opt),
                              opt.flow_radius, opt.flow_search);
  return 0.5 * (ssim(fd, fg, 0) + ssim(fd, fg, 1));
}

/// Temporal motion consistency, averaged over consecutive pairs.
inline double tcm(std::span<const Image> depths, std::span<const Image> gts, const EvalOptions& opt = {},
                  std::span<const Image> flows = {}) {
  detail::require_gt(depths, gts, "TCM");
  double s = 0.0;
  for (std::size_t t = 0; t + 1 < depths.size(); ++t)
    s += tcm_pair(depths[t], depths[t + 1], gts[t], gts[t + 1], opt, detail::optional_at(flows, t));
  return s / static_cast<double>(depths.size() - 1);
}

/// Mean |d - g| over valid pixels of one frame.
inline double mean_abs_error(const Image& d, const Image& g, const EvalOptions& opt = {}) {
  require_same_size(d, g, "mean_abs_error");
  double s = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < d.height(); ++y)
    for (int x = 0; x < d.width(); ++x) {
      if (!is_valid_depth(d(x, y)) || !is_valid_depth(g(x, y))) continue;
      if (!detail::passes_depth_cutoff(opt, &g, d, x, y)) continue;
      s += std::abs(d(x, y) - g(x, y));
      ++n;
    }
  if (n == 0) throw MetricError("mean_abs_error: no valid pixels");
  return s / static_cast<double>(n);
}

/// Population standard deviation of the per-frame L1 error.
inline double sd_l1(std::span<const Image> depths, std::span<const Image> gts, const EvalOptions& opt = {}) {
  detail::require_gt(depths, gts, "SD(L1)");
  std::vector<double> errs;
  for (std::size_t t = 0; t < depths.size(); ++t) errs.push_back(mean_abs_error(depths[t], gts[t], opt));
  const double mean = detail::mean_of(errs);
  double var = 0.0;
  for (double e : errs) var += (e - mean) * (e - mean);
  return std::sqrt(var / static_cast<double>(errs.size()));
}

inline constexpr std::array<double, 3> kDeltaThresholds{1.25, 1.25 * 1.25, 1.25 * 1.25 * 1.25};

struct SpatialMetrics {
  double rae = 0.0;
  double rms = 0.0;
  /// Fraction of pixels with max(d/g, g/d) >= 1.25^i ("bad pixels").
  std::array<double, 3> delta_bad{};
  /// 1 - delta_bad: the classical accuracy-style delta.
  std::array<double, 3> delta_accuracy{};
  std::size_t count = 0;
};

/// RAE, RMS and the delta ratios over pixels where both maps are valid and
/// g <= depth_cap.
inline SpatialMetrics spatial_metrics(const Image& d, const Image& g,
                                      double depth_cap = std::numeric_limits<double>::infinity()) {
  require_same_size(d, g, "spatial_metrics");
  SpatialMetrics m;
  double sq = 0.0;
  std::array<std::size_t, 3> bad{};
  for (int y = 0; y < d.height(); ++y) {
    for (int x = 0; x < d.width(); ++x) {
      const double dv = d(x, y);
      const double gv = g(x, y);
      if (!is_valid_depth(dv) || !is_valid_depth(gv) || gv > depth_cap) continue;
      ++m.count;
      m.rae += std::abs(dv - gv) / gv;
      sq += (dv - gv) * (dv - gv);
      const double ratio = std::max(dv / gv, gv / dv);
      for (int i = 0; i < 3; ++i)
        if (ratio >= kDeltaThresholds[i]) ++bad[i];
    }
  }
  if (m.count == 0) throw MetricError("spatial_metrics: no valid pixels");
  const double n = static_cast<double>(m.count);
  m.rae /= n;
  m.rms = std::sqrt(sq / n);
  for (int i = 0; i < 3; ++i) {
    m.delta_bad[i] = static_cast<double>(bad[i]) / n;
    m.delta_accuracy[i] = 1.0 - m.delta_bad[i];
  }
  return m;
}

struct ScaleShift {
  double scale = 1.0;
  double shift = 0.0;
  Image aligned;
  /// True when d has (numerically) no spread; scale is then 0 and the
  /// aligned map is the mean of g.
  bool degenerate = false;
  std::size_t count = 0;
};

/// Least-squares (s, b) minimizing sum (s d + b - g)^2 over pixels where both
/// values are finite (and, for depth-like data, positive).
inline ScaleShift align_scale_shift(const Image& d, const Image& g) {
  require_same_size(d, g, "align_scale_shift");
  double sd = 0.0;
  double sg = 0.0;
  std::size_t n = 0;
  auto usable = [](double a, double b) { return std::isfinite(a) && std::isfinite(b); };
  for (int y = 0; y < d.height(); ++y)
    for (int x = 0; x < d.width(); ++x)
      if (usable(d(x, y), g(x, y))) {
        sd += d(x, y);
        sg += g(x, y);
        ++n;
      }
  if (n < 2) throw MetricError("align_scale_shift: need at least 2 valid pixels");
  const double md = sd / n;
  const double mg = sg / n;
  double sdd = 0.0;
  double sdg = 0.0;
  for (int y = 0; y < d.height(); ++y)
    for (int x = 0; x < d.width(); ++x)
      if (usable(d(x, y), g(x, y))) {
        const double a = d(x, y) - md;
        sdd += a * a;
        sdg += a * (g(x, y) - mg);
      }
  ScaleShift out;
  out.count = n;
  if (!(sdd > 1e-12 * std::max(1.0, md * md) * n)) {
    out.degenerate = true;
    out.scale = 0.0;
    out.shift = mg;
  } else {
    out.scale = sdg / sdd;
    out.shift = mg - out.scale * md;
  }
  out.aligned = Image(d.width(), d.height(), 1, kHole);
  for (int y = 0; y < d.height(); ++y)
    for (int x = 0; x < d.width(); ++x)
      if (std::isfinite(d(x, y))) out.aligned(x, y) = out.scale * d(x, y) + out.shift;
  return out;
}

}  // namespace pcfuse
