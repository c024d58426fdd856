#include "persyn/neighborhood.hpp"

#include <algorithm>
#include <string>

namespace persyn {

namespace {

// Lattice positions i*step for which [pos, pos+window) stays inside
// [0, extent), plus the clamped final position extent-window.
std::vector<int> axis_positions(int extent, int window, int step) {
  std::vector<int> xs;
  for (int p = 0; p + window <= extent; p += step) xs.push_back(p);
  const int last = extent - window;
  if (xs.empty() || xs.back() != last) xs.push_back(last);
  return xs;
}

}  // namespace

void GridSpec::validate() const {
  if (nbhd_width < 2) throw DomainError("neighborhood width must be >= 2");
  if (nbhd_width % 2 != 0) throw DomainError("neighborhood width must be even");
  if (spacing < 1) throw DomainError("grid spacing must be >= 1");
  if (spacing > nbhd_width) {
    throw DomainError("grid spacing larger than the neighborhood width");
  }
  if (image_width < nbhd_width || image_height < nbhd_width) {
    throw DomainError("image " + std::to_string(image_width) + "x" +
                      std::to_string(image_height) +
                      " smaller than the neighborhood window " +
                      std::to_string(nbhd_width));
  }
}

SparseGrid make_sparse_grid(const GridSpec& spec) {
  spec.validate();
  SparseGrid grid;
  grid.spec = spec;
  grid.xs = axis_positions(spec.image_width, spec.nbhd_width, spec.spacing);
  grid.ys = axis_positions(spec.image_height, spec.nbhd_width, spec.spacing);
  return grid;
}

std::vector<PixelCoord> sparse_grid_anchors(const GridSpec& spec) {
  const SparseGrid grid = make_sparse_grid(spec);
  std::vector<PixelCoord> anchors;
  anchors.reserve(grid.count());
  for (int y : grid.ys) {
    for (int x : grid.xs) anchors.push_back({x, y});
  }
  return anchors;
}

std::vector<std::int32_t> containing_anchors(const SparseGrid& grid,
                                             PixelCoord origin,
                                             int region_width) {
  const int w = grid.spec.nbhd_width;
  if (region_width < 1 || origin.x < 0 || origin.y < 0 ||
      origin.x + region_width > grid.spec.image_width ||
      origin.y + region_width > grid.spec.image_height) {
    throw DomainError("query region outside the image");
  }

  // Window [a, a+w) contains [t, t+r) iff a in [t+r-w, t].
  auto axis_range = [&](const std::vector<int>& xs, int t) {
    const auto lo = std::lower_bound(xs.begin(), xs.end(), t + region_width - w);
    const auto hi = std::upper_bound(lo, xs.end(), t);
    return std::pair{static_cast<int>(lo - xs.begin()),
                     static_cast<int>(hi - xs.begin())};
  };
  const auto [x_lo, x_hi] = axis_range(grid.xs, origin.x);
  const auto [y_lo, y_hi] = axis_range(grid.ys, origin.y);

  std::vector<std::int32_t> ids;
  ids.reserve(static_cast<std::size_t>(x_hi - x_lo) * (y_hi - y_lo));
  const int stride = static_cast<int>(grid.xs.size());
  for (int iy = y_lo; iy < y_hi; ++iy) {
    for (int ix = x_lo; ix < x_hi; ++ix) {
      ids.push_back(iy * stride + ix);
    }
  }
  return ids;
}

std::vector<PixelCoord> patch_tiles(int out_width, int out_height,
                                    const PatchSpec& patch) {
  if (patch.patch_width < 1) throw DomainError("patch width must be >= 1");
  if (out_width < patch.patch_width || out_height < patch.patch_width) {
    throw DomainError("output smaller than the patch");
  }
  const auto xs = axis_positions(out_width, patch.patch_width, patch.patch_width);
  const auto ys = axis_positions(out_height, patch.patch_width, patch.patch_width);
  std::vector<PixelCoord> tiles;
  tiles.reserve(xs.size() * ys.size());
  for (int y : ys) {
    for (int x : xs) tiles.push_back({x, y});
  }
  return tiles;
}

NeighborhoodMatrix extract_all(const RgbsImage& img, const GridSpec& spec) {
  if (spec.image_width != img.width() || spec.image_height != img.height()) {
    throw ShapeError("grid spec dims do not match the image");
  }
  NeighborhoodMatrix m;
  m.window = spec.nbhd_width;
  m.dim = static_cast<std::size_t>(spec.nbhd_width) * spec.nbhd_width *
          RgbsImage::kChannels;
  m.anchors = sparse_grid_anchors(spec);
  m.data.resize(m.anchors.size() * m.dim);
  for (std::size_t i = 0; i < m.anchors.size(); ++i) {
    extract_window(img, m.anchors[i], m.window,
                   {m.data.data() + i * m.dim, m.dim});
  }
  return m;
}

void extract_window(const RgbsImage& img, PixelCoord anchor, int window,
                    std::span<float> out) {
  const std::span<const double> r = img.base().plane(0);
  const std::span<const double> g = img.base().plane(1);
  const std::span<const double> b = img.base().plane(2);
  const std::span<const double> s = img.scale_plane();
  const int stride = img.width();
  std::size_t o = 0;
  for (int dy = 0; dy < window; ++dy) {
    std::size_t row = static_cast<std::size_t>(anchor.y + dy) * stride + anchor.x;
    for (int dx = 0; dx < window; ++dx, ++row) {
      out[o++] = static_cast<float>(r[row]);
      out[o++] = static_cast<float>(g[row]);
      out[o++] = static_cast<float>(b[row]);
      out[o++] = static_cast<float>(s[row]);
    }
  }
}

}  // namespace persyn
