#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "expertadapt/core/errors.hpp"

namespace expertadapt::data {

/// Physical size of one pixel along each axis.
struct PixelSpacing {
  double row = 1.0;
  double col = 1.0;
};

/// Grayscale image with intensities in [0, 1], row-major.
class ImageGrid {
 public:
  ImageGrid() = default;
  ImageGrid(int height, int width, float fill = 0.0f)
      : height_(height), width_(width), pixels_(checked_size(height, width), fill) {}

  int height() const { return height_; }
  int width() const { return width_; }
  size_t size() const { return pixels_.size(); }

  float& at(int r, int c) { return pixels_[static_cast<size_t>(r) * width_ + c]; }
  float at(int r, int c) const { return pixels_[static_cast<size_t>(r) * width_ + c]; }

  std::vector<float>& pixels() { return pixels_; }
  const std::vector<float>& pixels() const { return pixels_; }

  bool same_shape(const ImageGrid& o) const { return height_ == o.height_ && width_ == o.width_; }

  /// Dataset-level invariants: at least 8x8, every value finite in [0, 1].
  void validate() const {
    if (height_ < 8 || width_ < 8)
      throw DataError(detail::strprintf("image must be at least 8x8, got %dx%d", height_, width_));
    for (float v : pixels_)
      if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
        throw DataError("image intensities must be finite and in [0, 1]");
  }

  bool operator==(const ImageGrid&) const = default;

 private:
  static size_t checked_size(int h, int w) {
    if (h <= 0 || w <= 0) throw DataError("image dimensions must be positive");
    return static_cast<size_t>(h) * static_cast<size_t>(w);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> pixels_;
};

/// Binary segmentation mask, values strictly 0 or 1, row-major.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width, std::uint8_t fill = 0)
      : height_(height), width_(width), pixels_(checked_size(height, width), fill) {}

  int height() const { return height_; }
  int width() const { return width_; }
  size_t size() const { return pixels_.size(); }

  std::uint8_t& at(int r, int c) { return pixels_[static_cast<size_t>(r) * width_ + c]; }
  std::uint8_t at(int r, int c) const { return pixels_[static_cast<size_t>(r) * width_ + c]; }

  std::vector<std::uint8_t>& pixels() { return pixels_; }
  const std::vector<std::uint8_t>& pixels() const { return pixels_; }

  bool same_shape(const BinaryMask& o) const { return height_ == o.height_ && width_ == o.width_; }

  /// Number of foreground pixels.
  long area() const {
    long n = 0;
    for (std::uint8_t v : pixels_) n += v;
    return n;
  }

  bool is_empty_mask() const { return area() == 0; }

  /// True if any foreground pixel lies on the outermost rows/columns.
  bool touches_border() const {
    for (int c = 0; c < width_; ++c)
      if (at(0, c) || at(height_ - 1, c)) return true;
    for (int r = 0; r < height_; ++r)
      if (at(r, 0) || at(r, width_ - 1)) return true;
    return false;
  }

  void validate() const {
    for (std::uint8_t v : pixels_)
      if (v > 1) throw DataError("mask values must be strictly 0 or 1");
  }

  bool operator==(const BinaryMask&) const = default;

 private:
  static size_t checked_size(int h, int w) {
    if (h <= 0 || w <= 0) throw DataError("mask dimensions must be positive");
    return static_cast<size_t>(h) * static_cast<size_t>(w);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> pixels_;
};

}  // namespace expertadapt::data
