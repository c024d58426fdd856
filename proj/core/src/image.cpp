#include "persyn/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

namespace persyn {

RasterImage::RasterImage(int width, int height, double fill)
    : width_(width), height_(height) {
  if (width < 1 || height < 1) {
    throw DomainError("image dimensions must be at least 1x1, got " +
                      std::to_string(width) + "x" + std::to_string(height));
  }
  for (auto& p : planes_) p.assign(pixel_count(), fill);
}

void RasterImage::validate() const {
  if (width_ < 1 || height_ < 1) throw DomainError("empty image");
  for (const auto& p : planes_) {
    if (p.size() != pixel_count()) throw ShapeError("plane size mismatch");
    for (double v : p) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw DomainError("sample outside [0,1]: " + std::to_string(v));
      }
    }
  }
}

RgbsImage::RgbsImage(RasterImage base, std::vector<double> scale_plane)
    : base_(std::move(base)), scale_plane_(std::move(scale_plane)) {
  if (scale_plane_.size() != base_.pixel_count()) {
    throw ShapeError("scale plane size does not match image dimensions");
  }
}

RasterImage downsample(const RasterImage& img, int factor) {
  if (factor < 1) throw DomainError("downsample factor must be >= 1");
  const int ow = img.width() / factor;
  const int oh = img.height() / factor;
  if (ow < 1 || oh < 1) {
    throw DomainError("downsample by " + std::to_string(factor) +
                      " leaves no pixels");
  }
  RasterImage out(ow, oh);
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  for (int c = 0; c < RasterImage::kChannels; ++c) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int dy = 0; dy < factor; ++dy) {
          for (int dx = 0; dx < factor; ++dx) {
            acc += img.at(c, x * factor + dx, y * factor + dy);
          }
        }
        out.at(c, x, y) = acc * inv;
      }
    }
  }
  return out;
}

RasterImage upsample_bilinear(const RasterImage& img, int factor) {
  if (factor < 1) throw DomainError("upsample factor must be >= 1");
  const std::int64_t ow64 = static_cast<std::int64_t>(img.width()) * factor;
  const std::int64_t oh64 = static_cast<std::int64_t>(img.height()) * factor;
  if (ow64 * oh64 > (std::int64_t{1} << 30)) {
    throw DomainError("upsampled image would be unreasonably large");
  }
  if (factor == 1) return img;

  const int ow = static_cast<int>(ow64);
  const int oh = static_cast<int>(oh64);
  RasterImage out(ow, oh);
  const double inv = 1.0 / factor;

  // Half-pixel-center mapping, clamped at the border.
  auto src_coord = [inv](int dst, int limit, int& lo, int& hi, double& frac) {
    const double s = (dst + 0.5) * inv - 0.5;
    const double fl = std::floor(s);
    lo = static_cast<int>(fl);
    frac = s - fl;
    hi = std::min(lo + 1, limit - 1);
    lo = std::max(lo, 0);
    if (hi < lo) hi = lo;
  };

  for (int y = 0; y < oh; ++y) {
    int y0, y1;
    double fy;
    src_coord(y, img.height(), y0, y1, fy);
    for (int x = 0; x < ow; ++x) {
      int x0, x1;
      double fx;
      src_coord(x, img.width(), x0, x1, fx);
      for (int c = 0; c < RasterImage::kChannels; ++c) {
        const double v00 = img.at(c, x0, y0);
        const double v10 = img.at(c, x1, y0);
        const double v01 = img.at(c, x0, y1);
        const double v11 = img.at(c, x1, y1);
        const double v = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) +
                         fy * ((1.0 - fx) * v01 + fx * v11);
        out.at(c, x, y) = v;
      }
    }
  }
  return out;
}

}  // namespace persyn
