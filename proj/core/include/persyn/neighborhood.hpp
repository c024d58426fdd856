#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "persyn/image.hpp"

namespace persyn {

// Placement rule for w x w neighborhood windows over an image. Anchors
// are window origin corners (minimum x/y); the window covers
// [anchor, anchor + nbhd_width) on both axes.
struct GridSpec {
  int nbhd_width = 8;  // w, even
  int spacing = 2;     // anchor lattice step, default w/4
  int image_width = 0;
  int image_height = 0;

  void validate() const;
};

// Output update unit: a patch_width x patch_width block of pixels
// handled at once. patch_width 1 degenerates to pixel-by-pixel mode.
struct PatchSpec {
  int patch_width = 2;
};

// Anchor lattice decomposed per axis. The anchor set is the product
// xs × ys: positions at multiples of the spacing, plus a final clamped
// position (dim - w) so the image boundary is always covered.
struct SparseGrid {
  GridSpec spec;
  std::vector<int> xs;
  std::vector<int> ys;

  std::int64_t count() const {
    return static_cast<std::int64_t>(xs.size()) * ys.size();
  }
  PixelCoord anchor(std::int32_t id) const {
    return {xs[id % xs.size()], ys[id / xs.size()]};
  }
};

SparseGrid make_sparse_grid(const GridSpec& spec);

// All window anchors in ascending row-major order (y outer, x inner).
std::vector<PixelCoord> sparse_grid_anchors(const GridSpec& spec);

// Ids of every anchor whose window fully contains the square region
// [origin, origin + region_width) on both axes, ascending.
std::vector<std::int32_t> containing_anchors(const SparseGrid& grid,
                                             PixelCoord origin,
                                             int region_width);

// Non-overlapping patch origins covering out_width x out_height in
// row-major order; the final row/column is clamped inwards (overlapping
// its neighbor) when the dims are not multiples of the patch width.
std::vector<PixelCoord> patch_tiles(int out_width, int out_height,
                                    const PatchSpec& patch);

// Vectorized neighborhoods: one row per anchor, laid out pixel
// row-major within the window with channels (R,G,B,S) per pixel.
struct NeighborhoodMatrix {
  int window = 0;
  std::size_t dim = 0;  // window^2 * 4
  std::vector<PixelCoord> anchors;
  std::vector<float> data;  // count() x dim

  std::size_t count() const { return anchors.size(); }
  std::span<const float> vec(std::int32_t i) const {
    return {data.data() + static_cast<std::size_t>(i) * dim, dim};
  }
};

NeighborhoodMatrix extract_all(const RgbsImage& img, const GridSpec& spec);

// Single window extraction into caller-provided storage of size
// window^2 * 4, same layout as NeighborhoodMatrix rows.
void extract_window(const RgbsImage& img, PixelCoord anchor, int window,
                    std::span<float> out);

}  // namespace persyn
