#pragma once

#include <span>
#include <string>

#include "persyn/image.hpp"

namespace persyn {

// Reads an 8-bit PNG or binary PPM (P6, maxval 255), detected by magic
// bytes. Samples are mapped to [0,1] by division by 255 and rows are
// flipped so row 0 is the bottom of the picture.
RasterImage load_image(const std::string& path);

// Writes PNG or binary PPM depending on the file extension (.png/.ppm).
// The file is written in one shot; on failure no partial file is left.
void save_image(const RasterImage& img, const std::string& path);

// 8-bit grayscale PNG from a single [0,1] plane (row 0 = bottom).
void save_gray_png(std::span<const double> plane, int width, int height,
                   const std::string& path);

}  // namespace persyn
