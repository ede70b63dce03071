#pragma once

// Per-sequence metric report: per-frame traces, aggregates, JSON and CSV.

#include <array>
#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcfuse/geometry.hpp"
#include "pcfuse/image.hpp"
#include "pcfuse/metrics.hpp"

namespace pcfuse {

inline constexpr int kReportSchema = 1;

/// How predictions are aligned to ground truth before evaluation.
enum class Alignment { none, depth, inverse_depth };

/// Values attached to frame t. Pair metrics (OPW, RTC, TCC, TCM, SC) describe
/// the pair (t, t+1) and are absent on the last frame.
struct FrameMetrics {
  int frame = 0;
  std::optional<double> opw;
  std::optional<double> rtc;
  std::optional<double> rtc_gated;
  std::optional<double> tcc;
  std::optional<double> tcm;
  std::optional<double> sc;
  std::optional<double> l1;
  std::optional<SpatialMetrics> spatial;
  std::optional<ScaleShift> alignment;  // aligned image dropped
};

struct MetricReport {
  std::string label;
  std::size_t frames = 0;
  std::size_t pixels = 0;  // m, pixels per frame
  EvalOptions options;
  Alignment alignment = Alignment::none;

  std::optional<double> opw;
  std::optional<double> rtc;
  std::optional<double> rtc_gated;
  std::optional<double> tcc;
  std::optional<double> tcm;
  std::optional<double> sc;
  std::optional<double> sd_l1;
  std::optional<double> l1;
  std::optional<double> rae;
  std::optional<double> rms;
  std::optional<std::array<double, 3>> delta_bad;
  std::optional<std::array<double, 3>> delta_accuracy;

  std::vector<FrameMetrics> per_frame;
};

/// Everything evaluate_sequence may use. Only `depths` is required; each
/// metric is computed when its inputs are present:
/// OPW/RTC need colors and flows, SC colors, poses and intrinsics,
/// TCC/TCM/SD(L1)/spatial metrics ground truth.
struct SequenceData {
  std::span<const Image> depths;
  std::span<const Image> colors;
  std::span<const Image> flows;  // flows[t] = O_{t->t+1}
  std::span<const Image> ground_truth;
  std::span<const CameraPose> poses;
  std::optional<CameraIntrinsics> intrinsics;
};

namespace detail {

inline bool all_present(std::span<const Image> v, std::size_t n) {
  if (v.size() < n) return false;
  for (std::size_t i = 0; i < n; ++i)
    if (v[i].empty()) return false;
  return true;
}

inline std::optional<double> mean_present(const std::vector<FrameMetrics>& frames,
                                          std::optional<double> FrameMetrics::*field) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& f : frames) {
    if (const auto& v = f.*field) {
      s += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

inline Image align_frame(const Image& d, const Image& g, Alignment mode, ScaleShift& fit) {
  if (mode == Alignment::depth) {
    fit = align_scale_shift(d, g);
    Image out = fit.aligned;
    for (double& v : out.data())
      if (!is_valid_depth(v)) v = kHole;
    fit.aligned = Image();
    return out;
  }
  fit = align_scale_shift(invert_depth(d), invert_depth(g));
  Image out = invert_depth(fit.aligned);
  fit.aligned = Image();
  return out;
}

}  // namespace detail

/// Evaluates a depth sequence. With alignment, each frame is fitted to its
/// ground truth (in depth or inverse depth) before any metric is computed.
inline MetricReport evaluate_sequence(const SequenceData& seq, const EvalOptions& opt = {},
                                      Alignment alignment = Alignment::none, std::string label = {}) {
  const std::size_t n = seq.depths.size();
  if (n == 0) throw MetricError("evaluate_sequence: empty sequence");
  for (const auto& d : seq.depths) require_same_size(d, seq.depths[0], "evaluate_sequence");

  MetricReport report;
  report.label = std::move(label);
  report.frames = n;
  report.pixels = seq.depths[0].pixel_count();
  report.options = opt;
  report.alignment = alignment;
  report.per_frame.resize(n);
  for (std::size_t t = 0; t < n; ++t) report.per_frame[t].frame = static_cast<int>(t);

  const bool has_gt = detail::all_present(seq.ground_truth, n);
  const bool has_color = detail::all_present(seq.colors, n);
  const bool has_flow = has_color && n >= 2 && detail::all_present(seq.flows, n - 1);
  const bool has_pose = has_color && seq.intrinsics.has_value() && seq.poses.size() >= n;

  if (alignment != Alignment::none && !has_gt) throw MetricError("alignment needs ground truth for every frame");

  std::vector<Image> aligned;
  std::span<const Image> depths = seq.depths;
  if (alignment != Alignment::none) {
    aligned.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
      ScaleShift fit;
      aligned.push_back(detail::align_frame(seq.depths[t], seq.ground_truth[t], alignment, fit));
      report.per_frame[t].alignment = fit;
    }
    depths = aligned;
  }
  const std::span<const Image> gts = has_gt ? seq.ground_truth : std::span<const Image>{};

  std::size_t rtc_hit = 0, rtc_total = 0, gated_hit = 0, gated_total = 0;
  for (std::size_t t = 0; t + 1 < n; ++t) {
    auto& f = report.per_frame[t];
    const Image* gt0 = has_gt ? &gts[t] : nullptr;
    if (has_flow) {
      const auto pair = flow_warp_pair(depths[t], depths[t + 1], seq.colors[t], seq.colors[t + 1], seq.flows[t], opt, gt0);
      f.opw = weighted_warp_error(pair, depths[t]);
      const auto c = rtc_counts(pair, depths[t], opt);
      if (c.total > 0) f.rtc = static_cast<double>(c.consistent) / static_cast<double>(c.total);
      if (c.gated_total > 0) f.rtc_gated = static_cast<double>(c.gated_consistent) / static_cast<double>(c.gated_total);
      rtc_hit += c.consistent;
      rtc_total += c.total;
      gated_hit += c.gated_consistent;
      gated_total += c.gated_total;
    }
    if (has_pose) {
      const auto pair = pose_warp_pair(depths[t], depths[t + 1], seq.colors[t], seq.colors[t + 1], seq.poses[t],
                                       seq.poses[t + 1], *seq.intrinsics, opt, gt0);
      f.sc = weighted_warp_error(pair, depths[t]);
    }
    if (has_gt) {
      const Image* flow = has_flow ? &seq.flows[t] : nullptr;
      f.tcc = tcc_pair(depths[t], depths[t + 1], gts[t], gts[t + 1], opt, flow);
      if (opt.compute_tcm) f.tcm = tcm_pair(depths[t], depths[t + 1], gts[t], gts[t + 1], opt, flow);
    }
  }

  if (has_gt) {
    const double cap = opt.sintel_cutoffs ? opt.max_depth : std::numeric_limits<double>::infinity();
    std::vector<double> l1s;
    std::size_t count = 0;
    double rae = 0.0, sq = 0.0;
    std::array<double, 3> bad{};
    for (std::size_t t = 0; t < n; ++t) {
      auto& f = report.per_frame[t];
      f.l1 = mean_abs_error(depths[t], gts[t], opt);
      l1s.push_back(*f.l1);
      const auto m = spatial_metrics(depths[t], gts[t], cap);
      f.spatial = m;
      const double c = static_cast<double>(m.count);
      count += m.count;
      rae += m.rae * c;
      sq += m.rms * m.rms * c;
      for (int i = 0; i < 3; ++i) bad[i] += m.delta_bad[i] * c;
    }
    const double total = static_cast<double>(count);
    report.rae = rae / total;
    report.rms = std::sqrt(sq / total);
    std::array<double, 3> acc{};
    for (int i = 0; i < 3; ++i) {
      bad[i] /= total;
      acc[i] = 1.0 - bad[i];
    }
    report.delta_bad = bad;
    report.delta_accuracy = acc;
    report.l1 = detail::mean_of(l1s);
    double var = 0.0;
    for (double e : l1s) var += (e - *report.l1) * (e - *report.l1);
    report.sd_l1 = std::sqrt(var / static_cast<double>(l1s.size()));
  }

  report.opw = detail::mean_present(report.per_frame, &FrameMetrics::opw);
  report.sc = detail::mean_present(report.per_frame, &FrameMetrics::sc);
  report.tcc = detail::mean_present(report.per_frame, &FrameMetrics::tcc);
  report.tcm = detail::mean_present(report.per_frame, &FrameMetrics::tcm);
  if (rtc_total > 0) report.rtc = static_cast<double>(rtc_hit) / static_cast<double>(rtc_total);
  if (gated_total > 0) report.rtc_gated = static_cast<double>(gated_hit) / static_cast<double>(gated_total);
  return report;
}

// ---------------------------------------------------------------------------
// Serialization

inline const char* to_string(Alignment a) {
  switch (a) {
    case Alignment::none:
      return "none";
    case Alignment::depth:
      return "depth";
    case Alignment::inverse_depth:
      return "inverse-depth";
  }
  return "none";
}

namespace detail {

inline nlohmann::json optional_json(const std::optional<double>& v) {
  if (v && std::isfinite(*v)) return *v;
  return nullptr;
}

}  // namespace detail

inline nlohmann::json to_json(const MetricReport& r) {
  using nlohmann::json;
  json j;
  j["schema"] = kReportSchema;
  if (!r.label.empty()) j["label"] = r.label;
  j["frames"] = r.frames;
  j["pixels"] = r.pixels;
  j["options"] = {{"kappa", r.options.kappa},
                  {"tau", r.options.tau},
                  {"sintel_cutoffs", r.options.sintel_cutoffs},
                  {"max_flow", r.options.max_flow},
                  {"max_depth", r.options.max_depth},
                  {"rtc_gate", r.options.rtc_gate},
                  {"alignment", to_string(r.alignment)},
                  {"tcm_flow", "block_flow"}};
  json summary;
  summary["opw"] = detail::optional_json(r.opw);
  summary["rtc"] = detail::optional_json(r.rtc);
  summary["rtc_gated"] = detail::optional_json(r.rtc_gated);
  summary["tcc"] = detail::optional_json(r.tcc);
  summary["tcm"] = detail::optional_json(r.tcm);
  summary["sc"] = detail::optional_json(r.sc);
  summary["sd_l1"] = detail::optional_json(r.sd_l1);
  summary["l1"] = detail::optional_json(r.l1);
  summary["rae"] = detail::optional_json(r.rae);
  summary["rms"] = detail::optional_json(r.rms);
  summary["delta_bad"] = r.delta_bad ? json(*r.delta_bad) : json(nullptr);
  summary["delta_accuracy"] = r.delta_accuracy ? json(*r.delta_accuracy) : json(nullptr);
  j["summary"] = summary;

  json frames = json::array();
  for (const auto& f : r.per_frame) {
    json fj;
    fj["frame"] = f.frame;
    fj["opw"] = detail::optional_json(f.opw);
    fj["rtc"] = detail::optional_json(f.rtc);
    fj["rtc_gated"] = detail::optional_json(f.rtc_gated);
    fj["tcc"] = detail::optional_json(f.tcc);
    fj["tcm"] = detail::optional_json(f.tcm);
    fj["sc"] = detail::optional_json(f.sc);
    fj["l1"] = detail::optional_json(f.l1);
    if (f.spatial) {
      fj["rae"] = f.spatial->rae;
      fj["rms"] = f.spatial->rms;
      fj["delta_bad"] = f.spatial->delta_bad;
      fj["delta_accuracy"] = f.spatial->delta_accuracy;
      fj["count"] = f.spatial->count;
    }
    if (f.alignment) {
      fj["align_scale"] = f.alignment->scale;
      fj["align_shift"] = f.alignment->shift;
      fj["align_degenerate"] = f.alignment->degenerate;
    }
    frames.push_back(std::move(fj));
  }
  j["per_frame"] = std::move(frames);
  return j;
}

inline constexpr const char* kCsvHeader =
    "frame,opw,rtc,rtc_gated,tcc,tcm,sc,sd_l1,l1,rae,rms,delta1_bad,delta2_bad,delta3_bad";

namespace detail {

inline std::string csv_cell(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return {};
  std::ostringstream os;
  os.precision(10);
  os << *v;
  return os.str();
}

}  // namespace detail

/// One row per frame followed by a "summary" row. Missing values are empty.
inline void write_csv(std::ostream& os, const MetricReport& r) {
  using detail::csv_cell;
  os << kCsvHeader << '\n';
  for (const auto& f : r.per_frame) {
    std::optional<double> rae, rms;
    std::array<std::optional<double>, 3> bad;
    if (f.spatial) {
      rae = f.spatial->rae;
      rms = f.spatial->rms;
      for (int i = 0; i < 3; ++i) bad[i] = f.spatial->delta_bad[i];
    }
    os << f.frame << ',' << csv_cell(f.opw) << ',' << csv_cell(f.rtc) << ',' << csv_cell(f.rtc_gated) << ','
       << csv_cell(f.tcc) << ',' << csv_cell(f.tcm) << ',' << csv_cell(f.sc) << ",," << csv_cell(f.l1) << ','
       << csv_cell(rae) << ',' << csv_cell(rms) << ',' << csv_cell(bad[0]) << ',' << csv_cell(bad[1]) << ','
       << csv_cell(bad[2]) << '\n';
  }
  std::array<std::optional<double>, 3> bad;
  if (r.delta_bad)
    for (int i = 0; i < 3; ++i) bad[i] = (*r.delta_bad)[i];
  os << "summary," << csv_cell(r.opw) << ',' << csv_cell(r.rtc) << ',' << csv_cell(r.rtc_gated) << ','
     << csv_cell(r.tcc) << ',' << csv_cell(r.tcm) << ',' << csv_cell(r.sc) << ',' << csv_cell(r.sd_l1) << ','
     << csv_cell(r.l1) << ',' << csv_cell(r.rae) << ',' << csv_cell(r.rms) << ',' << csv_cell(bad[0]) << ','
     << csv_cell(bad[1]) << ',' << csv_cell(bad[2]) << '\n';
}

inline std::string to_csv(const MetricReport& r) {
  std::ostringstream os;
  write_csv(os, r);
  return os.str();
}

}  // namespace pcfuse
