#pragma once

// Sequence manifests: a JSON file listing per-frame color, depth, pose and
// optional ground truth, flow, mask and uncertainty files.
//
// Either printf-style templates plus a frame count:
//
//   {"schema": 1, "frame_count": 20, "intrinsics": "intrinsics.txt",
//    "color": "color/%06d.pfm", "depth": "depth/%06d.pfm", "pose": "pose/%06d.txt",
//    "ground_truth": "gt/%06d.pfm", "flow": "flow/%06d.flo"}
//
// or an explicit "frames" array of objects with the same keys. Paths are
// relative to the manifest's directory. Flow is optional on the last frame.

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcfuse/frame_path.hpp"
#include "pcfuse/geometry.hpp"
#include "pcfuse/image.hpp"
#include "pcfuse/io.hpp"
#include "pcfuse/pipeline.hpp"
#include "pcfuse/synthetic.hpp"

namespace pcfuse {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DepthEncoding {
  enum class Format { pfm, pgm16 };
  Format format = Format::pfm;
  double scale = 1000.0;  // pgm16: depth = value / scale + offset
  double offset = 0.0;
};

struct FrameEntry {
  int index = 0;
  std::string color;
  std::string depth;
  std::string pose;
  std::optional<std::string> ground_truth;
  std::optional<std::string> flow;
  std::optional<std::string> mask;
  std::optional<std::string> uncertainty;
  std::optional<std::string> uncertainty_fused;
  std::optional<std::string> object_mask;
};

struct SequenceManifest {
  std::filesystem::path root;
  std::vector<FrameEntry> frames;
  CameraIntrinsics intrinsics;
  DepthEncoding depth_encoding;
  PoseConvention pose_convention = PoseConvention::camera_to_world;

  int frame_count() const { return static_cast<int>(frames.size()); }
  bool has_ground_truth() const {
    for (const auto& f : frames)
      if (!f.ground_truth) return false;
    return !frames.empty();
  }
  bool has_flow() const {
    for (std::size_t i = 0; i + 1 < frames.size(); ++i)
      if (!frames[i].flow) return false;
    return frames.size() >= 2;
  }
  bool has_masks() const {
    for (const auto& f : frames)
      if (!f.mask) return false;
    return !frames.empty();
  }
  bool has_uncertainty() const {
    for (const auto& f : frames)
      if (!f.uncertainty) return false;
    return !frames.empty();
  }
  bool has_object_masks() const {
    for (const auto& f : frames)
      if (!f.object_mask) return false;
    return !frames.empty();
  }
};

namespace detail {

inline std::string frame_file_error(int frame, const std::string& path, const std::string& what) {
  return "frame " + std::to_string(frame) + ": " + path + ": " + what;
}

inline std::optional<std::string> optional_key(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  if (!j[key].is_string()) throw DatasetError(std::string("manifest: '") + key + "' must be a string");
  return j[key].get<std::string>();
}

inline std::string required_key(const nlohmann::json& j, const char* key, const std::string& where) {
  auto v = optional_key(j, key);
  if (!v) throw DatasetError(where + ": missing '" + key + "'");
  return *v;
}

}  // namespace detail

/// Reads and validates a manifest. Every referenced file must exist. Reads
/// only; nothing is written.
inline SequenceManifest load_manifest(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(manifest_path + ": " + e.what());
  } catch (const FormatError& e) {
    throw DatasetError(e.what());
  }
  if (!j.is_object()) throw DatasetError(manifest_path + ": expected a JSON object");
  if (j.contains("schema") && j["schema"] != 1) throw DatasetError(manifest_path + ": unsupported schema");

  SequenceManifest m;
  m.root = fs::path(manifest_path).parent_path();
  auto resolve = [&](const std::string& rel) { return (m.root / rel).string(); };

  if (auto conv = detail::optional_key(j, "pose_convention")) {
    if (*conv == "camera-to-world") {
      m.pose_convention = PoseConvention::camera_to_world;
    } else if (*conv == "world-to-camera") {
      m.pose_convention = PoseConvention::world_to_camera;
    } else {
      throw DatasetError(manifest_path + ": unknown pose_convention '" + *conv + "'");
    }
  }
  if (j.contains("depth_encoding")) {
    const auto& e = j["depth_encoding"];
    const std::string fmt = e.value("format", "pfm");
    if (fmt == "pfm") {
      m.depth_encoding.format = DepthEncoding::Format::pfm;
    } else if (fmt == "pgm16") {
      m.depth_encoding.format = DepthEncoding::Format::pgm16;
      m.depth_encoding.scale = e.value("scale", 1000.0);
      m.depth_encoding.offset = e.value("offset", 0.0);
      if (!(m.depth_encoding.scale > 0.0)) throw DatasetError(manifest_path + ": depth scale must be positive");
    } else {
      throw DatasetError(manifest_path + ": unknown depth format '" + fmt + "'");
    }
  }

  if (j.contains("frames")) {
    if (!j["frames"].is_array()) throw DatasetError(manifest_path + ": 'frames' must be an array");
    int t = 0;
    for (const auto& fj : j["frames"]) {
      const std::string where = manifest_path + ": frame " + std::to_string(t);
      if (fj.contains("index") && fj["index"] != t) throw DatasetError(where + ": frame indices must be contiguous from 0");
      FrameEntry f;
      f.index = t;
      f.color = resolve(detail::required_key(fj, "color", where));
      f.depth = resolve(detail::required_key(fj, "depth", where));
      f.pose = resolve(detail::required_key(fj, "pose", where));
      auto opt = [&](const char* key) -> std::optional<std::string> {
        if (auto v = detail::optional_key(fj, key)) return resolve(*v);
        return std::nullopt;
      };
      f.ground_truth = opt("ground_truth");
      f.flow = opt("flow");
      f.mask = opt("mask");
      f.uncertainty = opt("uncertainty");
      f.uncertainty_fused = opt("uncertainty_fused");
      f.object_mask = opt("object_mask");
      m.frames.push_back(std::move(f));
      ++t;
    }
  } else {
    if (!j.contains("frame_count") || !j["frame_count"].is_number_integer()) {
      throw DatasetError(manifest_path + ": need 'frames' or an integer 'frame_count'");
    }
    const int n = j["frame_count"].get<int>();
    if (n < 0) throw DatasetError(manifest_path + ": negative frame_count");
    const std::string where = manifest_path;
    const std::string color = detail::required_key(j, "color", where);
    const std::string depth = detail::required_key(j, "depth", where);
    const std::string pose = detail::required_key(j, "pose", where);
    const auto gt = detail::optional_key(j, "ground_truth");
    const auto flow = detail::optional_key(j, "flow");
    const auto mask = detail::optional_key(j, "mask");
    const auto unc = detail::optional_key(j, "uncertainty");
    const auto unc_fused = detail::optional_key(j, "uncertainty_fused");
    const auto obj = detail::optional_key(j, "object_mask");
    auto expand = [&](const std::optional<std::string>& tmpl, int t) -> std::optional<std::string> {
      if (!tmpl) return std::nullopt;
      return resolve(format_frame_path(*tmpl, t));
    };
    for (int t = 0; t < n; ++t) {
      FrameEntry f;
      f.index = t;
      f.color = resolve(format_frame_path(color, t));
      f.depth = resolve(format_frame_path(depth, t));
      f.pose = resolve(format_frame_path(pose, t));
      f.ground_truth = expand(gt, t);
      if (t + 1 < n) f.flow = expand(flow, t);
      f.mask = expand(mask, t);
      f.uncertainty = expand(unc, t);
      f.uncertainty_fused = expand(unc_fused, t);
      f.object_mask = expand(obj, t);
      m.frames.push_back(std::move(f));
    }
  }
  if (m.frames.empty()) throw DatasetError(manifest_path + ": sequence has no frames");

  // Flow is optional on the last frame; drop it if the file is absent.
  if (auto& last = m.frames.back().flow; last && !fs::exists(*last)) last.reset();
  for (const auto& f : m.frames) {
    auto check = [&](const std::optional<std::string>& p) {
      if (p && !fs::is_regular_file(*p)) throw DatasetError(detail::frame_file_error(f.index, *p, "file not found"));
    };
    check(f.color);
    check(f.depth);
    check(f.pose);
    check(f.ground_truth);
    check(f.flow);
    check(f.mask);
    check(f.uncertainty);
    check(f.uncertainty_fused);
    check(f.object_mask);
  }

  const std::string intr = resolve(detail::required_key(j, "intrinsics", manifest_path));
  if (!fs::is_regular_file(intr)) throw DatasetError(intr + ": intrinsics file not found");
  try {
    const auto v = detail::parse_numbers(read_file(intr), intr);
    std::optional<std::pair<int, int>> size;
    if (v.size() == 4) {
      // Size taken from the first depth map.
      const Image& first = m.depth_encoding.format == DepthEncoding::Format::pfm
                               ? read_pfm(m.frames[0].depth)
                               : read_pgm16_depth(m.frames[0].depth, m.depth_encoding.scale, m.depth_encoding.offset);
      size = std::make_pair(first.width(), first.height());
    }
    m.intrinsics = read_intrinsics(intr, size);
  } catch (const FormatError& e) {
    throw DatasetError(e.what());
  }
  return m;
}

inline Image load_depth(const SequenceManifest& m, const std::string& path) {
  if (m.depth_encoding.format == DepthEncoding::Format::pgm16) {
    return read_pgm16_depth(path, m.depth_encoding.scale, m.depth_encoding.offset);
  }
  return read_pfm(path);
}

namespace detail {

template <typename F>
auto with_frame_context(int frame, const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const DatasetError&) {
    throw;
  } catch (const std::exception& e) {
    std::string what = e.what();
    if (what.rfind(path, 0) == 0) what = what.substr(path.size() + (what.size() > path.size() + 1 ? 2 : 0));
    throw DatasetError(frame_file_error(frame, path, what));
  }
}

inline Image load_checked(int frame, const std::string& path, const CameraIntrinsics& k, int channels,
                          const std::function<Image(const std::string&)>& reader) {
  return with_frame_context(frame, path, [&] {
    Image img = reader(path);
    if (!k.matches(img)) throw DatasetError(frame_file_error(frame, path, "resolution does not match the intrinsics"));
    if (channels > 0 && img.channels() != channels) {
      throw DatasetError(frame_file_error(frame, path, "expected " + std::to_string(channels) + " channel(s)"));
    }
    return img;
  });
}

}  // namespace detail

/// Reads the inputs of frame t. Only files of frame t are touched.
inline FrameInputs load_frame(const SequenceManifest& m, int t, bool with_ground_truth = true) {
  if (t < 0 || t >= m.frame_count()) throw DatasetError("frame " + std::to_string(t) + ": out of range");
  const FrameEntry& f = m.frames[static_cast<std::size_t>(t)];
  const auto& k = m.intrinsics;
  const auto pfm = [](const std::string& p) { return read_pfm(p); };
  const auto depth_reader = [&m](const std::string& p) { return load_depth(m, p); };
  FrameInputs in;
  in.frame = t;
  in.color = detail::load_checked(t, f.color, k, 3, pfm);
  in.depth = detail::load_checked(t, f.depth, k, 1, depth_reader);
  for (double& d : in.depth.data())
    if (!is_valid_depth(d)) d = kHole;
  in.pose = detail::with_frame_context(t, f.pose, [&] { return read_pose(f.pose, m.pose_convention, t); });
  if (with_ground_truth && f.ground_truth) {
    in.ground_truth = detail::load_checked(t, *f.ground_truth, k, 1, depth_reader);
    for (double& d : in.ground_truth.data())
      if (!is_valid_depth(d)) d = kHole;
  }
  if (f.flow) in.flow = detail::load_checked(t, *f.flow, k, 2, [](const std::string& p) { return read_flo(p); });
  if (f.mask) in.mask = detail::load_checked(t, *f.mask, k, 1, pfm);
  if (f.uncertainty) in.uncertainty_obs = detail::load_checked(t, *f.uncertainty, k, 1, pfm);
  if (f.uncertainty_fused) in.uncertainty_fused = detail::load_checked(t, *f.uncertainty_fused, k, 1, pfm);
  return in;
}

inline Image load_object_mask(const SequenceManifest& m, int t) {
  const FrameEntry& f = m.frames.at(static_cast<std::size_t>(t));
  if (!f.object_mask) throw DatasetError("frame " + std::to_string(t) + ": no object mask");
  return detail::load_checked(t, *f.object_mask, m.intrinsics, 1, [](const std::string& p) { return read_pfm(p); });
}

/// Writes a synthetic sequence as a template-style manifest dataset.
inline void write_synthetic(const SyntheticSequence& seq, const std::string& dir) {
  namespace fs = std::filesystem;
  for (const char* sub : {"color", "depth", "gt", "flow", "pose", "object"}) fs::create_directories(fs::path(dir) / sub);
  auto path = [&](const char* tmpl, int t) { return (fs::path(dir) / format_frame_path(tmpl, t)).string(); };
  const int n = static_cast<int>(seq.depths.size());
  for (int t = 0; t < n; ++t) {
    write_pfm(seq.colors[t], path("color/%06d.pfm", t));
    write_pfm(seq.depths[t], path("depth/%06d.pfm", t));
    write_pfm(seq.ground_truth[t], path("gt/%06d.pfm", t));
    write_pfm(seq.object_masks[t], path("object/%06d.pfm", t));
    write_file(path("pose/%06d.txt", t), format_pose(seq.poses[t]));
    if (t + 1 < n) write_flo(seq.flows[t], path("flow/%06d.flo", t));
  }
  write_file((fs::path(dir) / "intrinsics.txt").string(), format_intrinsics(seq.intrinsics));
  nlohmann::json j = {{"schema", 1},
                      {"frame_count", n},
                      {"intrinsics", "intrinsics.txt"},
                      {"pose_convention", "camera-to-world"},
                      {"depth_encoding", {{"format", "pfm"}}},
                      {"color", "color/%06d.pfm"},
                      {"depth", "depth/%06d.pfm"},
                      {"pose", "pose/%06d.txt"},
                      {"ground_truth", "gt/%06d.pfm"},
                      {"flow", "flow/%06d.flo"},
                      {"object_mask", "object/%06d.pfm"}};
  write_file((fs::path(dir) / "manifest.json").string(), j.dump(2) + "\n");
}

}  // namespace pcfuse
