#pragma once

// Per-frame fusion loop: temporal fusion against the rendered point cloud,
// spatial fusion with the observation, then the global point-cloud update.

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcfuse/geometry.hpp"
#include "pcfuse/image.hpp"
#include "pcfuse/metrics.hpp"
#include "pcfuse/pointcloud.hpp"
#include "pcfuse/render.hpp"
#include "pcfuse/spatial_fusion.hpp"
#include "pcfuse/temporal_fusion.hpp"

namespace pcfuse {

enum class Ablation { full, no_temporal, no_spatial, no_global_pc };

/// Parameterization the blending and fusion arithmetic runs in. Masks,
/// rendering and the point cloud always use metric depth.
enum class DepthParam { depth, inverse_depth };

/// Mask term multiplying the prior confidence in beta. `complement` uses
/// 1 - alpha (the prior is trusted where the scene is static); `literal`
/// uses alpha itself.
enum class BetaGate { complement, literal };

inline const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::full:
      return "full";
    case Ablation::no_temporal:
      return "no-temporal";
    case Ablation::no_spatial:
      return "no-spatial";
    case Ablation::no_global_pc:
      return "no-global-pc";
  }
  return "full";
}

inline Ablation parse_ablation(const std::string& s) {
  if (s == "full") return Ablation::full;
  if (s == "no-temporal") return Ablation::no_temporal;
  if (s == "no-spatial") return Ablation::no_spatial;
  if (s == "no-global-pc") return Ablation::no_global_pc;
  throw std::invalid_argument("unknown ablation '" + s + "'");
}

struct PipelineConfig {
  MaskProvider mask = MaskProvider::residual();
  UncertaintyProvider uncertainty = UncertaintyProvider::gradient();
  int supersample = kDefaultSupersample;
  int box_size = kDefaultBoxSize;
  double epsilon = kDefaultPruneEpsilon;
  int fill_iterations = kDefaultFillIterations;
  double background_ratio = kDefaultBackgroundRatio;
  Ablation ablation = Ablation::full;
  DepthParam parameterization = DepthParam::depth;
  BetaGate beta_gate = BetaGate::complement;
  EvalOptions eval;

  void validate() const {
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
    if (supersample < 1) throw std::invalid_argument("supersample must be >= 1");
    if (box_size < 1 || box_size % 2 == 0) throw std::invalid_argument("box size must be odd and positive");
    if (fill_iterations < 0) throw std::invalid_argument("fill iterations must be >= 0");
    if (!(background_ratio > 1.0)) throw std::invalid_argument("background ratio must exceed 1");
  }
};

/// Inputs of one frame. Optional images are left empty when absent.
struct FrameInputs {
  int frame = 0;
  Image color;  // 3 channels
  Image depth;  // metric, kHole for missing
  std::optional<CameraPose> pose;
  Image ground_truth;
  Image flow;
  Image mask;               // file mask provider
  Image uncertainty_obs;    // file uncertainty provider
  Image uncertainty_fused;  // file uncertainty provider
};

struct FrameRecord {
  int frame = 0;
  PriorProjection prior;  // d_p, c_p, w_p
  Image alpha;
  Image d_f;
  Image s_obs;
  Image s_fused;
  Image beta;
  Image gamma;
  Image output;  // d_o, metric depth
  std::size_t fallback_count = 0;
  FrameIntegrationStats stats;
};

/// State carried between frames.
struct FusionState {
  CameraIntrinsics intrinsics;
  GlobalPointCloud cloud;
  int next_frame = 0;

  explicit FusionState(const CameraIntrinsics& k) : intrinsics(k) { intrinsics.validate(); }
};

namespace detail {

inline Image to_param(const Image& depth, DepthParam p) {
  return p == DepthParam::inverse_depth ? invert_depth(depth) : depth;
}

inline std::string frame_error(int frame, const std::string& what) {
  return "frame " + std::to_string(frame) + ": " + what;
}

inline void check_frame_inputs(const FrameInputs& in, const CameraIntrinsics& k) {
  if (!in.pose) throw std::invalid_argument(frame_error(in.frame, "missing pose"));
  if (!k.matches(in.depth) || in.depth.channels() != 1) {
    throw std::invalid_argument(frame_error(in.frame, "depth resolution does not match the intrinsics"));
  }
  if (!k.matches(in.color) || in.color.channels() != 3) {
    throw std::invalid_argument(frame_error(in.frame, "color must be a 3-channel image at the depth resolution"));
  }
  if (!in.ground_truth.empty() && !in.ground_truth.same_size(in.depth)) {
    throw std::invalid_argument(frame_error(in.frame, "ground truth resolution mismatch"));
  }
}

/// Cloud rebuilt from one depth map, used by the no-global-pc ablation.
inline GlobalPointCloud cloud_from_depth(const Image& depth, const Image& color, const Image& confidence,
                                         const CameraPose& pose, const CameraIntrinsics& k) {
  GlobalPointCloud cloud;
  const PointBuffer pts = unproject(depth, k, pose);
  const Image everywhere = constant_image(depth.width(), depth.height(), 1.0);
  insert_points(cloud, pts, color, everywhere, confidence);
  return cloud;
}

}  // namespace detail

/// Renders the prior for the current camera: splat, background removal,
/// hole filling. The very first frame uses the observation itself.
inline PriorProjection render_prior(const FusionState& state, const FrameInputs& in, const PipelineConfig& cfg) {
  if (state.next_frame == 0) return bootstrap_prior(in.depth, in.color, kBootstrapConfidence);
  PriorProjection p = splat(state.cloud, *in.pose, state.intrinsics, cfg.supersample);
  p = remove_background(p, cfg.background_ratio);
  return fill_holes(p, cfg.fill_iterations);
}

/// Runs one frame and advances `state`. Frames must arrive in order.
inline FrameRecord run_frame(FusionState& state, const FrameInputs& in, const PipelineConfig& cfg) {
  cfg.validate();
  if (in.frame != state.next_frame) {
    throw std::invalid_argument(
        detail::frame_error(in.frame, "out of order, expected frame " + std::to_string(state.next_frame)));
  }
  detail::check_frame_inputs(in, state.intrinsics);
  const CameraIntrinsics& k = state.intrinsics;
  const CameraPose& pose = *in.pose;
  const bool first = state.next_frame == 0;
  const int w = k.width;
  const int h = k.height;

  FrameRecord rec;
  rec.frame = in.frame;
  rec.prior = render_prior(state, in, cfg);

  if (cfg.ablation == Ablation::no_temporal) {
    rec.alpha = Image(w, h, 1, 0.0);
  } else {
    MaskInputs mi;
    mi.frame = in.frame;
    mi.d_t = &in.depth;
    mi.c_t = &in.color;
    mi.prior = &rec.prior;
    mi.ground_truth = in.ground_truth.empty() ? nullptr : &in.ground_truth;
    mi.file_mask = in.mask.empty() ? nullptr : &in.mask;
    rec.alpha = cfg.mask.compute(mi);
  }
  force_alpha_at_prior_holes(rec.alpha, rec.prior);

  const Image d_t = detail::to_param(in.depth, cfg.parameterization);
  const Image d_p = detail::to_param(rec.prior.depth, cfg.parameterization);
  rec.d_f = temporal_blend(d_t, d_p, rec.alpha);

  UncertaintyInputs ui;
  ui.frame = in.frame;
  ui.color = &in.color;
  ui.role = UncertaintyRole::observation;
  ui.depth = &d_t;
  ui.file_map = in.uncertainty_obs.empty() ? nullptr : &in.uncertainty_obs;
  rec.s_obs = cfg.uncertainty.compute(ui);
  ui.role = UncertaintyRole::fused;
  ui.depth = &rec.d_f;
  ui.file_map = in.uncertainty_fused.empty() ? nullptr : &in.uncertainty_fused;
  rec.s_fused = cfg.uncertainty.compute(ui);

  rec.gamma = gamma_weight(rec.s_obs);
  Image gate = rec.alpha;
  if (cfg.beta_gate == BetaGate::complement)
    for (double& v : gate.data()) v = 1.0 - v;

  Image d_o;
  if (cfg.ablation == Ablation::no_spatial) {
    rec.beta = beta_weight(gate, rec.prior.confidence, Image(), cfg.box_size);
    d_o = rec.d_f;
  } else {
    rec.beta = beta_weight(gate, rec.prior.confidence, rec.s_fused, cfg.box_size);
    FusedDepth fused = spatial_fuse(rec.d_f, d_t, rec.beta, rec.gamma);
    rec.fallback_count = fused.fallback_count;
    d_o = std::move(fused.depth);
  }
  rec.output = detail::to_param(d_o, cfg.parameterization);

  auto& stats = rec.stats;
  stats.mean_confidence_before = state.cloud.mean_confidence();
  if (cfg.ablation == Ablation::no_global_pc) {
    Image conf(w, h);
    for (std::size_t i = 0; i < conf.pixel_count(); ++i) conf.data()[i] = rec.beta.data()[i] + rec.gamma.data()[i];
    state.cloud = detail::cloud_from_depth(rec.output, in.color, conf, pose, k);
    stats.inserted = state.cloud.size();
  } else {
    const PointBuffer z_t = unproject(in.depth, k, pose);
    if (first) {
      const Image ones = constant_image(w, h, 1.0);
      stats.inserted = insert_points(state.cloud, z_t, in.color, ones, ones);
    } else {
      const UpdateResult upd =
          update_points(state.cloud, z_t, in.color, rec.alpha, rec.beta, rec.gamma, pose, k);
      stats.visible = upd.updated + upd.occluded;
      stats.updated = upd.updated;
      stats.occluded = upd.occluded;
      stats.out_of_view = upd.out_of_view;
      stats.decayed = decay_unobserved(state.cloud, upd.visibility);
      stats.inserted = insert_points(state.cloud, z_t, in.color, rec.alpha, rec.gamma);
      stats.pruned = prune(state.cloud, cfg.epsilon);
    }
  }
  stats.mean_confidence_after = state.cloud.mean_confidence();
  ++state.next_frame;
  return rec;
}

struct SequenceResult {
  std::vector<Image> outputs;  // d_o per frame, metric depth
  std::vector<FrameIntegrationStats> stats;
  std::vector<std::size_t> fallback_counts;
  std::size_t final_cloud_size = 0;
};

/// Called after every frame; may inspect the record and the updated state.
using FrameCallback = std::function<void(const FrameRecord&, const FusionState&)>;

/// Runs frames 0..n-1 in order. `load(t)` supplies the inputs of frame t and
/// is only called once frames before t are complete.
inline SequenceResult run_sequence(const CameraIntrinsics& k, int frame_count,
                                   const std::function<FrameInputs(int)>& load, const PipelineConfig& cfg,
                                   const FrameCallback& on_frame = {}) {
  if (frame_count <= 0) throw std::invalid_argument("empty sequence");
  cfg.validate();
  FusionState state(k);
  SequenceResult result;
  for (int t = 0; t < frame_count; ++t) {
    FrameInputs in = load(t);
    in.frame = t;
    FrameRecord rec = run_frame(state, in, cfg);
    if (on_frame) on_frame(rec, state);
    result.outputs.push_back(std::move(rec.output));
    result.stats.push_back(rec.stats);
    result.fallback_counts.push_back(rec.fallback_count);
  }
  result.final_cloud_size = state.cloud.size();
  return result;
}

}  // namespace pcfuse
