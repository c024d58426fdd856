#pragma once

#include <string>
#include <vector>

#include "persyn/image.hpp"

namespace persyn {

// Orientation of the textured plane relative to the viewer. Angles are
// degrees at every interface and converted to radians internally.
struct ViewAngles {
  double slant_deg = 0.0;  // between the image normal and the texture normal
  double tilt_deg = 0.0;   // in-plane direction of the projected normal

  // slant in [0, 90), tilt in [0, 360).
  void validate() const;
};

// Extremal texel scales induced by the slant alone:
//   s_max = 1 / cos(slant),  s_min = cos(slant).
struct ScaleBounds {
  double s_max = 1.0;
  double s_min = 1.0;
  double s_delta = 0.0;
};

// Projected-coordinate span of the image corners on the tilt axis.
// By construction y_min == -y_max and y_delta == 2 * y_max; y_max can be
// negative when the tilt axis points away from the top-right corner.
struct ProjectionRange {
  double y_max = 0.0;
  double y_min = 0.0;
  double y_delta = 0.0;
};

ScaleBounds scale_bounds(const ViewAngles& view);

ProjectionRange projection_range(int width, int height, double tilt_deg);

// Unclamped local scale at pixel p: the linear map that sends the
// projected coordinate y_min to s_max and y_max to s_min. Corner pixels
// can land slightly outside [y_min, y_max] (the range is computed from
// dim-1-dim/2, half a pixel short of the true corner), so the returned
// value may overshoot the bounds; compute_scale_map clamps.
double local_scale(PixelCoord p, const ViewAngles& view, int width, int height);

// Per-pixel apparent texel scale. Values are clamped to
// [s_min, s_max]; along the tilt direction they are monotone whenever
// y_delta is nonzero, with the largest scales on the origin side.
class ScaleMap {
 public:
  ScaleMap() = default;
  ScaleMap(int width, int height, std::vector<float> values, ViewAngles view,
           ScaleBounds bounds);

  int width() const { return width_; }
  int height() const { return height_; }
  const ViewAngles& view() const { return view_; }
  const ScaleBounds& bounds() const { return bounds_; }
  const std::vector<float>& values() const { return values_; }

  float at(int x, int y) const {
    return values_[static_cast<std::size_t>(y) * width_ + x];
  }

  float min_value() const;
  float max_value() const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> values_;
  ViewAngles view_;
  ScaleBounds bounds_;
};

ScaleMap compute_scale_map(int width, int height, const ViewAngles& view);

// PSM1 container: magic line "PSM1\n", one JSON header line, then
// width*height little-endian float32 values, row-major, bottom row
// first. Round-trips bit-exactly.
void save_scale_map(const ScaleMap& map, const std::string& path);
ScaleMap load_scale_map(const std::string& path);

// Adds the scale map as the S channel, normalized against the map's
// bounds: (v - s_min) / (s_max - s_min), or the constant 0.5 when the
// bounds are degenerate (zero slant).
RgbsImage attach_scale_channel(const RasterImage& img, const ScaleMap& map);

}  // namespace persyn
