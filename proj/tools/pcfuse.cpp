// pcfuse command-line tool: fuse a sequence, evaluate depth maps, export the
// point cloud, generate synthetic scenes.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pcfuse/pcfuse.hpp"

namespace fs = std::filesystem;
using namespace pcfuse;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PipelineFlags {
  std::string mask = "residual";
  std::string uncertainty = "gradient";
  bool uncertainty_is_confidence = false;
  std::string ablation = "full";
  int supersample = kDefaultSupersample;
  double epsilon = kDefaultPruneEpsilon;
  int box_size = kDefaultBoxSize;
  double thresh_depth = kDefaultDepthResidualThreshold;
  double thresh_color = kDefaultColorResidualThreshold;
  int fill_iters = kDefaultFillIterations;
  double bg_ratio = kDefaultBackgroundRatio;
  bool mask_blur = false;
  std::string beta_gate = "complement";
  double gradient_scale = kDefaultGradientScale;
  bool inverse_depth = false;
};

struct EvalFlags {
  double kappa = kDefaultKappa;
  double tau = kDefaultTau;
  bool sintel_cutoffs = false;
  std::vector<std::string> report{"json"};
};

void add_pipeline_flags(CLI::App* app, PipelineFlags& f) {
  app->add_option("--mask", f.mask, "Mask provider: residual | oracle | file[:TEMPLATE]")->capture_default_str();
  app->add_option("--uncertainty", f.uncertainty, "Uncertainty provider: gradient | none | file[:OBS[,FUSED]]")
      ->capture_default_str();
  app->add_flag("--uncertainty-is-confidence", f.uncertainty_is_confidence,
                "File uncertainty maps hold confidences exp(-s)");
  app->add_option("--ablation", f.ablation, "full | no-temporal | no-spatial | no-global-pc")
      ->check(CLI::IsMember({"full", "no-temporal", "no-spatial", "no-global-pc"}))
      ->capture_default_str();
  app->add_option("--supersample", f.supersample, "Splatting supersample factor")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app->add_option("--epsilon", f.epsilon, "Prune threshold on point confidence")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app->add_option("--box-size", f.box_size, "Box filter size for the prior confidence (odd)")->capture_default_str();
  app->add_option("--thresh-depth", f.thresh_depth, "Residual mask: relative depth threshold")->capture_default_str();
  app->add_option("--thresh-color", f.thresh_color, "Residual mask: RGB distance threshold")->capture_default_str();
  app->add_option("--fill-iters", f.fill_iters, "Hole filling iterations")->capture_default_str();
  app->add_option("--bg-ratio", f.bg_ratio, "Background removal depth ratio")->capture_default_str();
  app->add_flag("--mask-blur", f.mask_blur, "Apply a 3x3 blur to the mask");
  app->add_option("--beta-gate", f.beta_gate, "Mask term in beta: complement (1-alpha) | literal (alpha)")
      ->check(CLI::IsMember({"complement", "literal"}))
      ->capture_default_str();
  app->add_option("--gradient-scale", f.gradient_scale, "Scale of the gradient uncertainty heuristic")
      ->capture_default_str();
  app->add_flag("--inverse-depth", f.inverse_depth, "Blend and fuse in inverse depth");
}

void add_eval_flags(CLI::App* app, EvalFlags& f) {
  app->add_option("--kappa", f.kappa, "Occlusion weight sharpness")->capture_default_str();
  app->add_option("--tau", f.tau, "RTC ratio threshold")->capture_default_str();
  app->add_flag("--sintel-cutoffs", f.sintel_cutoffs, "Ignore pixels with flow > 250 px or depth > 30 m");
  app->add_option("--report", f.report, "Report formats: json, csv")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();
}

EvalOptions make_eval_options(const EvalFlags& f) {
  EvalOptions opt;
  opt.kappa = f.kappa;
  opt.tau = f.tau;
  opt.sintel_cutoffs = f.sintel_cutoffs;
  return opt;
}

/// Splits "kind:arg" into kind and arg (arg empty when absent).
std::pair<std::string, std::string> split_provider(const std::string& arg) {
  const auto colon = arg.find(':');
  if (colon == std::string::npos) return {arg, {}};
  return {arg.substr(0, colon), arg.substr(colon + 1)};
}

PipelineConfig make_config(const PipelineFlags& f, const EvalFlags& e, const SequenceManifest& m) {
  PipelineConfig cfg;
  const auto pfm_loader = [](const std::string& p) { return read_pfm(p); };

  const auto [mask_kind, mask_arg] = split_provider(f.mask);
  if (mask_kind == "residual") {
    if (!mask_arg.empty()) throw UsageError("--mask residual takes no argument");
    cfg.mask = MaskProvider::residual(f.thresh_depth, f.thresh_color);
  } else if (mask_kind == "oracle") {
    if (!mask_arg.empty()) throw UsageError("--mask oracle takes no argument");
    if (!m.has_ground_truth()) {
      for (const auto& fr : m.frames)
        if (!fr.ground_truth)
          throw UsageError("--mask oracle needs ground truth depth, but frame " + std::to_string(fr.index) +
                           " has none in the manifest");
    }
    cfg.mask = MaskProvider::oracle();
  } else if (mask_kind == "file") {
    if (mask_arg.empty() && !m.has_masks()) {
      throw UsageError("--mask file needs a path template (file:TEMPLATE) or 'mask' entries in the manifest");
    }
    cfg.mask = MaskProvider::file(mask_arg);
    cfg.mask.loader = pfm_loader;
  } else {
    throw UsageError("unknown mask provider '" + f.mask + "'");
  }
  cfg.mask.blur = f.mask_blur;

  const auto [unc_kind, unc_arg] = split_provider(f.uncertainty);
  if (unc_kind == "gradient" || unc_kind == "none") {
    if (!unc_arg.empty()) throw UsageError("--uncertainty " + unc_kind + " takes no argument");
    if (f.uncertainty_is_confidence) {
      throw UsageError("--uncertainty-is-confidence conflicts with --uncertainty " + unc_kind);
    }
    cfg.uncertainty = unc_kind == "gradient" ? UncertaintyProvider::gradient(f.gradient_scale)
                                             : UncertaintyProvider::none();
  } else if (unc_kind == "file") {
    std::string obs = unc_arg;
    std::string fused;
    if (const auto comma = unc_arg.find(','); comma != std::string::npos) {
      obs = unc_arg.substr(0, comma);
      fused = unc_arg.substr(comma + 1);
    }
    if (obs.empty() && !m.has_uncertainty()) {
      throw UsageError("--uncertainty file needs a path template (file:OBS[,FUSED]) or 'uncertainty' entries in the "
                       "manifest");
    }
    cfg.uncertainty = UncertaintyProvider::file(obs, fused, f.uncertainty_is_confidence);
    cfg.uncertainty.loader = pfm_loader;
  } else {
    throw UsageError("unknown uncertainty provider '" + f.uncertainty + "'");
  }

  cfg.ablation = parse_ablation(f.ablation);
  cfg.supersample = f.supersample;
  cfg.epsilon = f.epsilon;
  cfg.box_size = f.box_size;
  cfg.fill_iterations = f.fill_iters;
  cfg.background_ratio = f.bg_ratio;
  cfg.beta_gate = f.beta_gate == "literal" ? BetaGate::literal : BetaGate::complement;
  cfg.parameterization = f.inverse_depth ? DepthParam::inverse_depth : DepthParam::depth;
  cfg.eval = make_eval_options(e);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& ex) {
    throw UsageError(ex.what());
  }
  return cfg;
}

/// Frame loader that only exposes ground truth to the oracle mask.
std::function<FrameInputs(int)> frame_loader(const SequenceManifest& m, const PipelineConfig& cfg) {
  const bool needs_gt = cfg.mask.needs_ground_truth() && cfg.ablation != Ablation::no_temporal;
  return [&m, needs_gt](int t) { return load_frame(m, t, needs_gt); };
}

struct EvalInputs {
  std::vector<Image> colors;
  std::vector<Image> flows;
  std::vector<Image> gts;
  std::vector<CameraPose> poses;
};

EvalInputs load_eval_inputs(const SequenceManifest& m) {
  EvalInputs in;
  for (int t = 0; t < m.frame_count(); ++t) {
    FrameInputs f = load_frame(m, t, true);
    in.colors.push_back(std::move(f.color));
    if (t + 1 < m.frame_count()) in.flows.push_back(std::move(f.flow));
    in.gts.push_back(std::move(f.ground_truth));
    in.poses.push_back(*f.pose);
  }
  return in;
}

MetricReport evaluate(const SequenceManifest& m, const EvalInputs& in, std::span<const Image> depths,
                      const EvalOptions& opt, Alignment align, const std::string& label) {
  SequenceData sd;
  sd.depths = depths;
  sd.colors = in.colors;
  sd.flows = in.flows;
  sd.ground_truth = in.gts;
  sd.poses = in.poses;
  sd.intrinsics = m.intrinsics;
  return evaluate_sequence(sd, opt, align, label);
}

void write_reports(const MetricReport& r, const fs::path& dir, const std::string& stem,
                   const std::vector<std::string>& formats) {
  for (const auto& fmt : formats) {
    if (fmt == "json") {
      write_file((dir / (stem + ".json")).string(), to_json(r).dump(2) + "\n");
    } else {
      write_file((dir / (stem + ".csv")).string(), to_csv(r));
    }
  }
}

void print_summary(const MetricReport& r) {
  nlohmann::json j = to_json(r);
  std::cout << j["summary"].dump(2) << "\n";
}

int cmd_run(const std::string& manifest_path, const std::string& out, const PipelineFlags& pf, const EvalFlags& ef,
            int ply_every, bool eval_input) {
  const SequenceManifest m = load_manifest(manifest_path);
  const PipelineConfig cfg = make_config(pf, ef, m);
  const fs::path out_dir(out);
  fs::create_directories(out_dir / "depth");
  if (ply_every > 0) fs::create_directories(out_dir / "ply");

  const auto on_frame = [&](const FrameRecord& rec, const FusionState& state) {
    write_pfm(rec.output, (out_dir / format_frame_path("depth/%06d.pfm", rec.frame)).string());
    if (ply_every > 0 && (rec.frame % ply_every == 0 || rec.frame + 1 == m.frame_count())) {
      write_ply((out_dir / format_frame_path("ply/%06d.ply", rec.frame)).string(), state.cloud);
    }
  };
  const auto load = frame_loader(m, cfg);
  SequenceResult result;
  int current = 0;
  try {
    result = run_sequence(
        m.intrinsics, m.frame_count(),
        [&](int t) {
          current = t;
          return load(t);
        },
        cfg, on_frame);
  } catch (const DatasetError&) {
    throw;
  } catch (const std::exception& e) {
    const std::string what = e.what();
    if (what.rfind("frame ", 0) == 0) throw;
    throw DatasetError("frame " + std::to_string(current) + ": " + m.frames[current].depth + ": " + what);
  }

  const EvalInputs in = load_eval_inputs(m);
  const MetricReport report = evaluate(m, in, result.outputs, cfg.eval, Alignment::none, "output");
  write_reports(report, out_dir, "report", ef.report);
  if (eval_input) {
    std::vector<Image> inputs;
    for (int t = 0; t < m.frame_count(); ++t) inputs.push_back(load_frame(m, t, false).depth);
    write_reports(evaluate(m, in, inputs, cfg.eval, Alignment::none, "input"), out_dir, "input_report", ef.report);
  }
  print_summary(report);
  return 0;
}

int cmd_eval(const std::string& manifest_path, const std::string& pred, const std::string& align_str,
             const std::string& out, const EvalFlags& ef) {
  const SequenceManifest m = load_manifest(manifest_path);
  const Alignment align = align_str == "depth"           ? Alignment::depth
                          : align_str == "inverse-depth" ? Alignment::inverse_depth
                                                         : Alignment::none;
  if (align != Alignment::none && !m.has_ground_truth()) throw UsageError("--align needs ground truth depth");
  std::vector<Image> depths;
  for (int t = 0; t < m.frame_count(); ++t) {
    if (pred.empty()) {
      depths.push_back(load_frame(m, t, false).depth);
      continue;
    }
    fs::path p = fs::path(pred) / format_frame_path("depth/%06d.pfm", t);
    if (!fs::exists(p)) p = fs::path(pred) / format_frame_path("%06d.pfm", t);
    if (!fs::exists(p)) throw DatasetError("frame " + std::to_string(t) + ": " + p.string() + ": file not found");
    Image d = detail::with_frame_context(t, p.string(), [&] { return read_pfm(p.string()); });
    if (!m.intrinsics.matches(d) || d.channels() != 1) {
      throw DatasetError("frame " + std::to_string(t) + ": " + p.string() + ": resolution mismatch");
    }
    depths.push_back(std::move(d));
  }
  const EvalInputs in = load_eval_inputs(m);
  const MetricReport report = evaluate(m, in, depths, make_eval_options(ef), align, pred.empty() ? "input" : "prediction");
  if (!out.empty()) {
    fs::create_directories(out);
    write_reports(report, out, "report", ef.report);
  }
  print_summary(report);
  return 0;
}

int cmd_export_ply(const std::string& manifest_path, int frame, const std::string& out, const PipelineFlags& pf,
                   const EvalFlags& ef) {
  const SequenceManifest m = load_manifest(manifest_path);
  if (frame < 0 || frame >= m.frame_count()) {
    throw UsageError("--frame " + std::to_string(frame) + " is outside 0.." + std::to_string(m.frame_count() - 1));
  }
  const PipelineConfig cfg = make_config(pf, ef, m);
  const auto load = frame_loader(m, cfg);
  FusionState state(m.intrinsics);
  for (int t = 0; t <= frame; ++t) run_frame(state, load(t), cfg);
  if (const auto parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
  write_ply(out, state.cloud);
  std::cout << "wrote " << state.cloud.size() << " points to " << out << "\n";
  return 0;
}

int cmd_make_synthetic(const std::string& scene, int frames, const std::vector<int>& size, double noise,
                       std::uint64_t seed, const std::string& out) {
  SyntheticOptions opt;
  opt.scene = scene == "dynamic" ? SceneKind::moving_sphere : SceneKind::static_plane;
  opt.frames = frames;
  opt.width = size.at(0);
  opt.height = size.at(1);
  opt.noise_sigma = noise;
  opt.seed = seed;
  write_synthetic(make_synthetic(opt), out);
  std::cout << "wrote " << frames << " frames to " << (fs::path(out) / "manifest.json").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point-cloud based temporal and spatial depth fusion"};
  app.require_subcommand(1);

  PipelineFlags pf;
  EvalFlags ef;
  std::string manifest;
  std::string out;

  auto* run = app.add_subcommand("run", "Fuse a sequence and write per-frame depth plus a metric report");
  run->add_option("manifest", manifest, "Sequence manifest (JSON)")->required();
  run->add_option("--out", out, "Output directory")->required();
  add_pipeline_flags(run, pf);
  add_eval_flags(run, ef);
  int ply_every = 0;
  bool eval_input = false;
  run->add_option("--ply-every", ply_every, "Write a point-cloud PLY every N frames (0 = never)");
  run->add_flag("--eval-input", eval_input, "Also evaluate the raw input depth (input_report.*)");

  auto* eval = app.add_subcommand("eval", "Compute metrics on existing depth maps");
  eval->add_option("manifest", manifest, "Sequence manifest (JSON)")->required();
  std::string pred;
  std::string align = "none";
  eval->add_option("--pred", pred, "Directory of predicted depth PFMs (default: the manifest's input depth)");
  eval->add_option("--align", align, "Per-frame scale-shift alignment to ground truth")
      ->check(CLI::IsMember({"none", "depth", "inverse-depth"}))
      ->capture_default_str();
  eval->add_option("--out", out, "Directory for report files (default: summary on stdout only)");
  add_eval_flags(eval, ef);

  auto* ply = app.add_subcommand("export-ply", "Run the pipeline up to a frame and export the point cloud");
  ply->add_option("manifest", manifest, "Sequence manifest (JSON)")->required();
  int frame = 0;
  ply->add_option("--frame", frame, "Last frame to integrate")->required();
  ply->add_option("--out", out, "Output PLY file")->required();
  add_pipeline_flags(ply, pf);
  add_eval_flags(ply, ef);

  auto* synth = app.add_subcommand("make-synthetic", "Generate an analytic test sequence");
  std::string scene = "static";
  int frames = 20;
  std::vector<int> size{64, 64};
  double noise = 0.0;
  std::uint64_t seed = 7;
  synth->add_option("--scene", scene, "static | dynamic")
      ->check(CLI::IsMember({"static", "dynamic"}))
      ->capture_default_str();
  synth->add_option("--frames", frames, "Number of frames")->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--size", size, "Width and height")->expected(2)->check(CLI::Range(2, 8192));
  synth->add_option("--noise", noise, "Depth noise sigma in meters")->check(CLI::NonNegativeNumber)->capture_default_str();
  synth->add_option("--seed", seed, "Noise seed")->capture_default_str();
  synth->add_option("--out", out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(manifest, out, pf, ef, ply_every, eval_input);
    if (eval->parsed()) return cmd_eval(manifest, pred, align, out, ef);
    if (ply->parsed()) return cmd_export_ply(manifest, frame, out, pf, ef);
    if (synth->parsed()) return cmd_make_synthetic(scene, frames, size, noise, seed, out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
