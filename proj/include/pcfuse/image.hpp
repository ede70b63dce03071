#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pcfuse {

/// Depth value marking a pixel with no measurement. Using +inf means a
/// Z-buffer min-compare needs no special case for empty pixels.
inline constexpr double kHole = std::numeric_limits<double>::infinity();

inline bool is_valid_depth(double d) { return d > 0.0 && d < kHole; }

/// Dense row-major H x W x C grid. Pixel (x, y) is (column, row).
template <typename T>
class BasicImage {
 public:
  using value_type = T;

  BasicImage() = default;
  BasicImage(int width, int height, int channels = 1, T fill = T{})
      : width_(width), height_(height), channels_(channels) {
    if (width < 0 || height < 0 || channels < 1) {
      throw std::invalid_argument("BasicImage: bad shape " + std::to_string(width) + "x" +
                                  std::to_string(height) + "x" + std::to_string(channels));
    }
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
  bool empty() const { return data_.empty(); }

  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  T& operator()(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  const T& operator()(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  /// All channels of one pixel.
  std::span<T> pixel(int x, int y) { return {data_.data() + index(x, y), static_cast<std::size_t>(channels_)}; }
  std::span<const T> pixel(int x, int y) const {
    return {data_.data() + index(x, y), static_cast<std::size_t>(channels_)};
  }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  template <typename U>
  bool same_size(const BasicImage<U>& other) const {
    return width_ == other.width() && height_ == other.height();
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool operator==(const BasicImage&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<T> data_;
};

/// Floating point grid used for depth, color, confidence, masks and flow.
using Image = BasicImage<double>;
/// Per-pixel boolean flags (0 / 1).
using Mask = BasicImage<std::uint8_t>;

template <typename A, typename B>
void require_same_size(const BasicImage<A>& a, const BasicImage<B>& b, const char* what) {
  if (!a.same_size(b)) {
    throw std::invalid_argument(std::string(what) + ": resolution mismatch (" + std::to_string(a.width()) + "x" +
                                std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                                std::to_string(b.height()) + ")");
  }
}

inline Image constant_image(int width, int height, double value, int channels = 1) {
  return Image(width, height, channels, value);
}

/// 1 where the depth is a usable measurement.
inline Mask depth_validity(const Image& depth) {
  Mask valid(depth.width(), depth.height());
  for (int y = 0; y < depth.height(); ++y)
    for (int x = 0; x < depth.width(); ++x) valid(x, y) = is_valid_depth(depth(x, y)) ? 1 : 0;
  return valid;
}

/// Elementwise 1/d; holes stay holes.
inline Image invert_depth(const Image& depth) {
  Image out(depth.width(), depth.height());
  for (int y = 0; y < depth.height(); ++y)
    for (int x = 0; x < depth.width(); ++x) {
      const double d = depth(x, y);
      out(x, y) = is_valid_depth(d) ? 1.0 / d : kHole;
    }
  return out;
}

}  // namespace pcfuse
