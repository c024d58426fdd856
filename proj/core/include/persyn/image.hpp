#pragma once

#include <array>
#include <span>
#include <vector>

#include "persyn/errors.hpp"

namespace persyn {

// Integer pixel position. The origin is the bottom-left corner of the
// image: y grows upwards, row 0 is the bottom row.
struct PixelCoord {
  int x = 0;
  int y = 0;

  friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
};

// RGB raster held as unit-interval doubles, one plane per channel,
// row-major with row 0 at the bottom. Values are quantized to 8 bits
// only at file boundaries.
class RasterImage {
 public:
  static constexpr int kChannels = 3;

  RasterImage() = default;
  RasterImage(int width, int height, double fill = 0.0);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width_) * height_;
  }

  double at(int channel, int x, int y) const {
    return planes_[channel][index(x, y)];
  }
  double& at(int channel, int x, int y) {
    return planes_[channel][index(x, y)];
  }

  std::span<const double> plane(int channel) const { return planes_[channel]; }
  std::vector<double>& plane(int channel) { return planes_[channel]; }

  bool same_size(const RasterImage& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }
  bool in_bounds(PixelCoord p) const {
    return p.x >= 0 && p.x < width_ && p.y >= 0 && p.y < height_;
  }

  // Throws ShapeError/DomainError when a plane size or a sample is off.
  void validate() const;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  std::array<std::vector<double>, kChannels> planes_;
};

// An RGB raster with one extra scale plane (the S channel), normalized
// to [0,1]. This is the optimizer's state variable.
class RgbsImage {
 public:
  static constexpr int kChannels = 4;  // R, G, B, S

  RgbsImage() = default;
  RgbsImage(RasterImage base, std::vector<double> scale_plane);

  int width() const { return base_.width(); }
  int height() const { return base_.height(); }

  const RasterImage& base() const { return base_; }
  std::span<const double> scale_plane() const { return scale_plane_; }
  std::vector<double>& scale_plane() { return scale_plane_; }

  // channel 0..2 = RGB, channel 3 = S.
  double value(int channel, int x, int y) const {
    if (channel < RasterImage::kChannels) return base_.at(channel, x, y);
    return scale_plane_[static_cast<std::size_t>(y) * width() + x];
  }
  double& value(int channel, int x, int y) {
    if (channel < RasterImage::kChannels) return base_.at(channel, x, y);
    return scale_plane_[static_cast<std::size_t>(y) * width() + x];
  }

 private:
  RasterImage base_;
  std::vector<double> scale_plane_;
};

// Block-mean decimation. Output dims are floor(dims / factor); trailing
// rows/columns that do not fill a block are dropped.
RasterImage downsample(const RasterImage& img, int factor);

// Bilinear magnification by an integer factor with clamp-to-edge
// sampling. Constant images map to constant images.
RasterImage upsample_bilinear(const RasterImage& img, int factor);

}  // namespace persyn
