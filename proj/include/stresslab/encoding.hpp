#pragma once

#include <vector>

#include "stresslab/problem.hpp"

namespace stresslab {

/// Plane image over the element grid, row-major, row 0 at the top.
struct PlaneImage {
  int height = 0, width = 0;
  std::vector<double> pixels;

  PlaneImage() = default;
  PlaneImage(int h, int w) : height(h), width(w),
      pixels(static_cast<size_t>(h) * w, 0.0) {}
  double& at(int r, int c) { return pixels[static_cast<size_t>(r) * width + c]; }
  double at(int r, int c) const { return pixels[static_cast<size_t>(r) * width + c]; }
};

/// Single-channel encoding: 0 = void, 1 = solid, 2 = load position.
using SingleChannelImage = PlaneImage;

/// Five-channel encoding: geometry {0,1}; per-pixel load shares (N) on the
/// load pixels; displacement BC planes with -1 on constrained pixels.
struct ChannelStack {
  PlaneImage geometry, load_x, load_y, bc_x, bc_y;

  const PlaneImage& plane(int i) const {
    switch (i) {
      case 0: return geometry;
      case 1: return load_x;
      case 2: return load_y;
      case 3: return bc_x;
      default: return bc_y;
    }
  }
  static constexpr int kChannels = 5;
};

inline SingleChannelImage rasterize_single_channel(const ProblemSpec& p) {
  p.validate();
  SingleChannelImage img(p.grid.height, p.grid.width);
  for (int r = 0; r < p.grid.height; ++r)
    for (int c = 0; c < p.grid.width; ++c)
      img.at(r, c) = p.mask.solid(r, c) ? 1.0 : 0.0;
  for (int r : p.mask.load_rows()) img.at(r, p.grid.width - 1) = 2.0;
  return img;
}

inline ChannelStack rasterize_multi_channel(const ProblemSpec& p) {
  p.validate();
  const int h = p.grid.height, w = p.grid.width;
  ChannelStack s;
  s.geometry = PlaneImage(h, w);
  s.load_x = PlaneImage(h, w);
  s.load_y = PlaneImage(h, w);
  s.bc_x = PlaneImage(h, w);
  s.bc_y = PlaneImage(h, w);

  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      s.geometry.at(r, c) = p.mask.solid(r, c) ? 1.0 : 0.0;

  // The resultant splits equally across the load pixels.
  std::vector<int> rows = p.mask.load_rows();
  const double k = static_cast<double>(rows.size());
  for (int r : rows) {
    s.load_x.at(r, w - 1) = p.load.qx() / k;
    s.load_y.at(r, w - 1) = p.load.qy() / k;
  }

  for (int r = 0; r < h; ++r) {
    if (!p.mask.solid(r, 0)) continue;
    s.bc_x.at(r, 0) = -1.0;
    s.bc_y.at(r, 0) = -1.0;
  }
  return s;
}

struct NodalForce {
  int node = 0;  // node id in the (height+1) x (width+1) grid
  double fx = 0.0, fy = 0.0;
};

/// Lumps the evenly distributed tip load onto the right-edge nodes of the
/// load cells: each cell's share splits half/half to its two edge nodes, so
/// interior shared nodes accumulate two half-shares. fy is positive upward.
inline std::vector<NodalForce> distribute_load(const GeometryMask& mask,
                                               const LoadSpec& load,
                                               const GridSpec& grid = GridSpec{}) {
  std::vector<int> rows = mask.load_rows();
  require(!rows.empty(), "no-load-surface",
          "no solid cell in the free-end column");
  const double k = static_cast<double>(rows.size());
  const double fx_half = load.qx() / k / 2.0;
  const double fy_half = load.qy() / k / 2.0;

  std::vector<double> fx(grid.node_count(), 0.0), fy(grid.node_count(), 0.0);
  std::vector<uint8_t> seen(grid.node_count(), 0);
  std::vector<int> touched;
  for (int r : rows) {
    // right edge of cell (r, width-1): nodes (r, width) and (r+1, width)
    for (int nr : {r, r + 1}) {
      int n = grid.node_id(nr, grid.width);
      if (!seen[n]) {
        seen[n] = 1;
        touched.push_back(n);
      }
      fx[n] += fx_half;
      fy[n] += fy_half;
    }
  }

  std::vector<NodalForce> out;
  out.reserve(touched.size());
  std::sort(touched.begin(), touched.end());
  for (int n : touched) out.push_back({n, fx[n], fy[n]});
  return out;
}

}  // namespace stresslab
