#pragma once

// File formats: PFM (grayscale / color float images), Middlebury .flo,
// 16-bit PGM depth, pose and intrinsics text files.

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/SVD>

#include "pcfuse/geometry.hpp"
#include "pcfuse/image.hpp"

namespace pcfuse {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw FormatError("failed writing " + path);
}

namespace detail {

inline std::uint32_t byteswap32(std::uint32_t v) {
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

inline float load_float(const char* p, bool little_endian) {
  std::uint32_t bits;
  std::memcpy(&bits, p, 4);
  if (little_endian != (std::endian::native == std::endian::little)) bits = byteswap32(bits);
  return std::bit_cast<float>(bits);
}

inline void store_float_le(std::string& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  if constexpr (std::endian::native != std::endian::little) bits = byteswap32(bits);
  char buf[4];
  std::memcpy(buf, &bits, 4);
  out.append(buf, 4);
}

inline std::int32_t load_int32_le(const char* p) {
  std::uint32_t bits;
  std::memcpy(&bits, p, 4);
  if constexpr (std::endian::native != std::endian::little) bits = byteswap32(bits);
  return static_cast<std::int32_t>(bits);
}

inline void store_int32_le(std::string& out, std::int32_t v) {
  std::uint32_t bits = static_cast<std::uint32_t>(v);
  if constexpr (std::endian::native != std::endian::little) bits = byteswap32(bits);
  char buf[4];
  std::memcpy(buf, &bits, 4);
  out.append(buf, 4);
}

/// Whitespace-delimited token reader over a byte buffer, for text headers.
class HeaderReader {
 public:
  HeaderReader(std::string_view bytes, std::string name) : bytes_(bytes), name_(std::move(name)) {}

  std::string token() {
    while (pos_ < bytes_.size() && std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    if (start == pos_) throw FormatError(name_ + ": truncated header");
    return std::string(bytes_.substr(start, pos_ - start));
  }

  long integer() {
    const std::string t = token();
    std::size_t used = 0;
    long v = 0;
    try {
      v = std::stol(t, &used);
    } catch (const std::exception&) {
      throw FormatError(name_ + ": bad integer '" + t + "' in header");
    }
    if (used != t.size()) throw FormatError(name_ + ": bad integer '" + t + "' in header");
    return v;
  }

  double real() {
    const std::string t = token();
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(t, &used);
    } catch (const std::exception&) {
      throw FormatError(name_ + ": bad number '" + t + "' in header");
    }
    if (used != t.size()) throw FormatError(name_ + ": bad number '" + t + "' in header");
    return v;
  }

  /// Consumes the single whitespace byte that ends a binary header.
  void end_of_header() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      throw FormatError(name_ + ": missing separator after header");
    }
    ++pos_;
  }

  std::size_t position() const { return pos_; }

 private:
  std::string_view bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// PFM

struct PfmInfo {
  double scale = -1.0;
  bool little_endian = true;
  std::size_t nan_count = 0;  // NaNs replaced by kHole
};

/// Parses a PFM image. Rows are stored bottom-up; a negative scale means
/// little-endian payload. NaN values become kHole. Extra bytes after the
/// payload are rejected.
inline Image parse_pfm(std::string_view bytes, const std::string& name = "pfm", PfmInfo* info = nullptr) {
  detail::HeaderReader header(bytes, name);
  const std::string magic = header.token();
  int channels = 0;
  if (magic == "Pf") {
    channels = 1;
  } else if (magic == "PF") {
    channels = 3;
  } else {
    throw FormatError(name + ": bad PFM magic '" + magic + "'");
  }
  const long width = header.integer();
  const long height = header.integer();
  if (width <= 0 || height <= 0 || width > (1 << 20) || height > (1 << 20)) {
    throw FormatError(name + ": bad PFM size");
  }
  const double scale = header.real();
  if (scale == 0.0 || !std::isfinite(scale)) throw FormatError(name + ": PFM scale must be nonzero");
  header.end_of_header();
  const bool little = scale < 0.0;
  const std::size_t expected = static_cast<std::size_t>(width) * height * channels * 4;
  const std::size_t offset = header.position();
  if (bytes.size() - offset < expected) throw FormatError(name + ": truncated PFM payload");
  if (bytes.size() - offset > expected) throw FormatError(name + ": trailing bytes after PFM payload");

  Image img(static_cast<int>(width), static_cast<int>(height), channels);
  std::size_t nans = 0;
  const char* p = bytes.data() + offset;
  for (long row = 0; row < height; ++row) {
    const int y = static_cast<int>(height - 1 - row);
    for (long x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        double v = detail::load_float(p, little);
        p += 4;
        if (std::isnan(v)) {
          v = kHole;
          ++nans;
        }
        img(static_cast<int>(x), y, c) = v;
      }
    }
  }
  if (info != nullptr) *info = PfmInfo{scale, little, nans};
  return img;
}

inline Image read_pfm(const std::string& path, PfmInfo* info = nullptr) {
  PfmInfo local;
  Image img = parse_pfm(read_file(path), path, &local);
  if (local.nan_count > 0) {
    std::clog << "warning: " << path << ": " << local.nan_count << " NaN values treated as holes\n";
  }
  if (info != nullptr) *info = local;
  return img;
}

/// Little-endian PFM ("Pf" for 1 channel, "PF" for 3) with scale -1.
inline std::string encode_pfm(const Image& img) {
  if (img.channels() != 1 && img.channels() != 3) throw FormatError("PFM supports 1 or 3 channels");
  std::string out = img.channels() == 1 ? "Pf\n" : "PF\n";
  out += std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n-1\n";
  out.reserve(out.size() + img.pixel_count() * img.channels() * 4);
  for (int y = img.height() - 1; y >= 0; --y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) detail::store_float_le(out, static_cast<float>(img(x, y, c)));
  return out;
}

inline void write_pfm(const Image& img, const std::string& path) { write_file(path, encode_pfm(img)); }

// ---------------------------------------------------------------------------
// Middlebury .flo

inline constexpr float kFloMagic = 202021.25f;
inline constexpr double kUnknownFlowThreshold = 1e9;
inline constexpr float kUnknownFlowValue = 1e10f;

/// Parses a .flo file into a 2-channel image. Components above 1e9 in
/// magnitude mark unknown flow; such pixels are NaN in both channels.
inline Image parse_flo(std::string_view bytes, const std::string& name = "flo") {
  if (bytes.size() < 12) throw FormatError(name + ": truncated .flo header");
  const float magic = detail::load_float(bytes.data(), true);
  if (magic != kFloMagic) throw FormatError(name + ": bad .flo magic");
  const std::int32_t width = detail::load_int32_le(bytes.data() + 4);
  const std::int32_t height = detail::load_int32_le(bytes.data() + 8);
  if (width <= 0 || height <= 0 || width > (1 << 20) || height > (1 << 20)) {
    throw FormatError(name + ": bad .flo size");
  }
  const std::size_t expected = static_cast<std::size_t>(width) * height * 8;
  if (bytes.size() - 12 != expected) {
    throw FormatError(name + ": .flo payload size mismatch (expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(bytes.size() - 12) + ")");
  }
  Image flow(width, height, 2);
  const char* p = bytes.data() + 12;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double u = detail::load_float(p, true);
      const double v = detail::load_float(p + 4, true);
      p += 8;
      const bool unknown = !(std::abs(u) <= kUnknownFlowThreshold) || !(std::abs(v) <= kUnknownFlowThreshold);
      flow(x, y, 0) = unknown ? std::numeric_limits<double>::quiet_NaN() : u;
      flow(x, y, 1) = unknown ? std::numeric_limits<double>::quiet_NaN() : v;
    }
  return flow;
}

inline Image read_flo(const std::string& path) { return parse_flo(read_file(path), path); }

/// Non-finite flow is written as the unknown-flow value 1e10.
inline std::string encode_flo(const Image& flow) {
  if (flow.channels() != 2) throw FormatError(".flo needs a 2-channel image");
  std::string out;
  out.reserve(12 + flow.pixel_count() * 8);
  detail::store_float_le(out, kFloMagic);
  detail::store_int32_le(out, flow.width());
  detail::store_int32_le(out, flow.height());
  for (int y = 0; y < flow.height(); ++y)
    for (int x = 0; x < flow.width(); ++x)
      for (int c = 0; c < 2; ++c) {
        const double v = flow(x, y, c);
        detail::store_float_le(out, std::isfinite(v) ? static_cast<float>(v) : kUnknownFlowValue);
      }
  return out;
}

inline void write_flo(const Image& flow, const std::string& path) { write_file(path, encode_flo(flow)); }

// ---------------------------------------------------------------------------
// 16-bit depth (binary PGM, big-endian samples)

/// depth = value / scale + offset; 0 is a hole.
inline Image parse_pgm16_depth(std::string_view bytes, double scale, double offset = 0.0,
                               const std::string& name = "pgm") {
  if (!(scale > 0.0)) throw FormatError(name + ": depth scale must be positive");
  detail::HeaderReader header(bytes, name);
  if (header.token() != "P5") throw FormatError(name + ": expected binary PGM (P5)");
  const long width = header.integer();
  const long height = header.integer();
  const long maxval = header.integer();
  if (width <= 0 || height <= 0 || width > (1 << 20) || height > (1 << 20)) throw FormatError(name + ": bad size");
  if (maxval < 256 || maxval > 65535) throw FormatError(name + ": expected a 16-bit PGM");
  header.end_of_header();
  const std::size_t expected = static_cast<std::size_t>(width) * height * 2;
  const std::size_t offset_bytes = header.position();
  if (bytes.size() - offset_bytes != expected) throw FormatError(name + ": PGM payload size mismatch");
  Image depth(static_cast<int>(width), static_cast<int>(height), 1, kHole);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + offset_bytes);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x, p += 2) {
      const unsigned value = (static_cast<unsigned>(p[0]) << 8) | p[1];
      if (value != 0) depth(x, y) = value / scale + offset;
    }
  return depth;
}

inline Image read_pgm16_depth(const std::string& path, double scale, double offset = 0.0) {
  return parse_pgm16_depth(read_file(path), scale, offset, path);
}

inline std::string encode_pgm16_depth(const Image& depth, double scale, double offset = 0.0) {
  std::string out = "P5\n" + std::to_string(depth.width()) + " " + std::to_string(depth.height()) + "\n65535\n";
  for (int y = 0; y < depth.height(); ++y)
    for (int x = 0; x < depth.width(); ++x) {
      const double d = depth(x, y);
      long v = is_valid_depth(d) ? std::lround((d - offset) * scale) : 0;
      v = std::clamp(v, 0L, 65535L);
      out.push_back(static_cast<char>((v >> 8) & 0xff));
      out.push_back(static_cast<char>(v & 0xff));
    }
  return out;
}

// ---------------------------------------------------------------------------
// Poses and intrinsics

enum class PoseConvention { camera_to_world, world_to_camera };

inline constexpr double kPoseTolerance = 1e-4;

namespace detail {

inline std::vector<double> parse_numbers(std::string_view text, const std::string& name) {
  std::vector<double> out;
  std::istringstream is{std::string(text)};
  std::string tok;
  while (is >> tok) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      throw FormatError(name + ": bad number '" + tok + "'");
    }
    if (used != tok.size()) throw FormatError(name + ": bad number '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace detail

/// Nearest rotation (in Frobenius norm) to `m`, via SVD.
inline Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) {
    Eigen::Matrix3d u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  return r;
}

/// 16 numbers, row-major 4x4. Rigid within kPoseTolerance is accepted and
/// re-orthonormalized; anything further off is an error.
inline CameraPose parse_pose(std::string_view text, PoseConvention convention, int frame = 0,
                             const std::string& name = "pose") {
  const auto v = detail::parse_numbers(text, name);
  if (v.size() != 16) {
    throw FormatError(name + ": expected 16 numbers, got " + std::to_string(v.size()));
  }
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = v[r * 4 + c];
  if (!CameraPose::is_rigid(m, kPoseTolerance)) throw FormatError(name + ": matrix is not a rigid transform");
  m.topLeftCorner<3, 3>() = nearest_rotation(m.topLeftCorner<3, 3>());
  m.row(3) << 0, 0, 0, 1;
  if (convention == PoseConvention::world_to_camera) {
    m = CameraPose::from_matrix(m, frame).inverse_matrix();
  }
  return CameraPose::from_matrix(m, frame);
}

inline CameraPose read_pose(const std::string& path, PoseConvention convention, int frame = 0) {
  return parse_pose(read_file(path), convention, frame, path);
}

inline std::string format_pose(const CameraPose& pose) {
  std::ostringstream os;
  os.precision(17);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) os << pose.matrix()(r, c) << (c == 3 ? '\n' : ' ');
  }
  return os.str();
}

/// "fx fy cx cy [width height]". Without a size in the file, `fallback_size`
/// (width, height) is used.
inline CameraIntrinsics parse_intrinsics(std::string_view text, std::optional<std::pair<int, int>> fallback_size = {},
                                         const std::string& name = "intrinsics") {
  const auto v = detail::parse_numbers(text, name);
  if (v.size() != 4 && v.size() != 6) {
    throw FormatError(name + ": expected 'fx fy cx cy [width height]', got " + std::to_string(v.size()) + " numbers");
  }
  CameraIntrinsics k;
  k.fx = v[0];
  k.fy = v[1];
  k.cx = v[2];
  k.cy = v[3];
  if (v.size() == 6) {
    k.width = static_cast<int>(v[4]);
    k.height = static_cast<int>(v[5]);
    if (k.width != v[4] || k.height != v[5]) throw FormatError(name + ": image size must be integral");
  } else if (fallback_size) {
    k.width = fallback_size->first;
    k.height = fallback_size->second;
  } else {
    throw FormatError(name + ": image size missing");
  }
  if (!k.valid()) throw FormatError(name + ": invalid intrinsics");
  return k;
}

inline CameraIntrinsics read_intrinsics(const std::string& path,
                                        std::optional<std::pair<int, int>> fallback_size = {}) {
  return parse_intrinsics(read_file(path), fallback_size, path);
}

inline std::string format_intrinsics(const CameraIntrinsics& k) {
  std::ostringstream os;
  os.precision(17);
  os << k.fx << ' ' << k.fy << ' ' << k.cx << ' ' << k.cy << ' ' << k.width << ' ' << k.height << '\n';
  return os.str();
}

}  // namespace pcfuse
