#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "stresslab/error.hpp"

namespace stresslab {

/// Structured grid of square elements. Rows run top to bottom, columns left
/// to right; column 0 is the fixed wall. The node grid is (height+1) x
/// (width+1).
struct GridSpec {
  int height = 24;      // element rows
  int width = 32;       // element columns
  double element_size = 1.0;  // mm

  void validate() const {
    require(height >= 2 && width >= 2, "invalid-parameters",
            "grid must be at least 2x2 elements");
    require(element_size > 0.0, "invalid-parameters",
            "element size must be positive");
  }

  int node_rows() const { return height + 1; }
  int node_cols() const { return width + 1; }
  int node_id(int r, int c) const { return r * node_cols() + c; }
  int cell_count() const { return height * width; }
  int node_count() const { return node_rows() * node_cols(); }
};

/// Solid/void occupancy of the element grid. 1 = solid, 0 = void.
class GeometryMask {
 public:
  GeometryMask() = default;
  GeometryMask(int height, int width)
      : height_(height), width_(width),
        cells_(static_cast<size_t>(height) * width, 0) {}

  int height() const { return height_; }
  int width() const { return width_; }

  uint8_t at(int r, int c) const { return cells_[idx(r, c)]; }
  void set(int r, int c, uint8_t v) { cells_[idx(r, c)] = v; }
  bool solid(int r, int c) const { return cells_[idx(r, c)] != 0; }

  const std::vector<uint8_t>& cells() const { return cells_; }

  int solid_count() const {
    return static_cast<int>(std::count(cells_.begin(), cells_.end(), 1));
  }

  /// Solid rows of the rightmost column, top to bottom. These are the cells
  /// that carry the external load.
  std::vector<int> load_rows() const {
    std::vector<int> rows;
    for (int r = 0; r < height_; ++r)
      if (solid(r, width_ - 1)) rows.push_back(r);
    return rows;
  }

  GeometryMask flipped_vertically() const {
    GeometryMask out(height_, width_);
    for (int r = 0; r < height_; ++r)
      for (int c = 0; c < width_; ++c)
        out.set(height_ - 1 - r, c, at(r, c));
    return out;
  }

  /// Checks the structural invariants: attachment at the wall, a load
  /// surface at the free end, and a single 4-connected solid component.
  void validate() const {
    bool has_left = false, has_right = false;
    for (int r = 0; r < height_; ++r) {
      has_left = has_left || solid(r, 0);
      has_right = has_right || solid(r, width_ - 1);
    }
    require(has_left, "invalid-parameters",
            "no solid cell in the wall column");
    require(has_right, "invalid-parameters",
            "no solid cell in the free-end column");

    // Flood fill from the first solid cell; everything solid must be reached.
    int start = -1;
    for (size_t i = 0; i < cells_.size(); ++i)
      if (cells_[i]) { start = static_cast<int>(i); break; }
    std::vector<uint8_t> seen(cells_.size(), 0);
    std::vector<int> stack{start};
    seen[start] = 1;
    int reached = 0;
    while (!stack.empty()) {
      int cur = stack.back();
      stack.pop_back();
      ++reached;
      int r = cur / width_, c = cur % width_;
      const int dr[4] = {-1, 1, 0, 0};
      const int dc[4] = {0, 0, -1, 1};
      for (int k = 0; k < 4; ++k) {
        int rr = r + dr[k], cc = c + dc[k];
        if (rr < 0 || rr >= height_ || cc < 0 || cc >= width_) continue;
        int j = rr * width_ + cc;
        if (cells_[j] && !seen[j]) {
          seen[j] = 1;
          stack.push_back(j);
        }
      }
    }
    require(reached == solid_count(), "floating-material",
            "solid region is not a single 4-connected component");
  }

 private:
  size_t idx(int r, int c) const {
    return static_cast<size_t>(r) * width_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<uint8_t> cells_;
};

enum class FamilyId {
  kRectangle,
  kTrapezoid,
  kCurvedTrapezoid,
  kRectangleHole,
  kTrapezoidHole,
  kCurvedTrapezoidHole,
};

enum class HoleShape { kNone, kCircle, kSquare };

inline const char* family_name(FamilyId f) {
  switch (f) {
    case FamilyId::kRectangle: return "rectangle";
    case FamilyId::kTrapezoid: return "trapezoid";
    case FamilyId::kCurvedTrapezoid: return "curved-trapezoid";
    case FamilyId::kRectangleHole: return "rectangle-hole";
    case FamilyId::kTrapezoidHole: return "trapezoid-hole";
    case FamilyId::kCurvedTrapezoidHole: return "curved-trapezoid-hole";
  }
  return "?";
}

inline FamilyId family_from_name(const std::string& s) {
  if (s == "rectangle") return FamilyId::kRectangle;
  if (s == "trapezoid") return FamilyId::kTrapezoid;
  if (s == "curved-trapezoid") return FamilyId::kCurvedTrapezoid;
  if (s == "rectangle-hole") return FamilyId::kRectangleHole;
  if (s == "trapezoid-hole") return FamilyId::kTrapezoidHole;
  if (s == "curved-trapezoid-hole") return FamilyId::kCurvedTrapezoidHole;
  fail("catalog-parse-error", "unknown geometry family '" + s + "'");
}

/// One parameterized cantilever shape. The outer contour is symmetric about
/// the grid mid-line: the half-height profile runs linearly from
/// left_height/2 at x=0 to right_height/2 at x=width, plus an optional
/// parabolic bulge (sagitta, negative = concave sides). A cell is solid when
/// its center lies inside the contour and outside the hole.
struct GeometryFamily {
  FamilyId family = FamilyId::kRectangle;
  double left_height = 24.0;
  double right_height = 24.0;
  double sagitta = 0.0;  // mid-span bulge of each side, in cells
  HoleShape hole_shape = HoleShape::kNone;
  double hole_cx = 0.0;  // hole center, grid units (x right, y down)
  double hole_cy = 0.0;
  double hole_size = 0.0;  // radius for circles, full side for squares

  bool tapered() const {
    return family == FamilyId::kTrapezoid ||
           family == FamilyId::kTrapezoidHole;
  }
  bool curved() const {
    return family == FamilyId::kCurvedTrapezoid ||
           family == FamilyId::kCurvedTrapezoidHole;
  }
  bool has_hole() const {
    return family == FamilyId::kRectangleHole ||
           family == FamilyId::kTrapezoidHole ||
           family == FamilyId::kCurvedTrapezoidHole;
  }

  /// Half-height of the contour at horizontal position x in [0, width].
  double half_height(double x, const GridSpec& grid) const {
    double t = x / grid.width;
    double hh = 0.5 * (left_height + (right_height - left_height) * t);
    if (curved()) hh += sagitta * 4.0 * t * (1.0 - t);
    return hh;
  }

  bool inside_contour(double x, double y, const GridSpec& grid) const {
    double mid = 0.5 * grid.height;
    return std::abs(y - mid) <= half_height(x, grid);
  }

  bool inside_hole(double x, double y) const {
    switch (hole_shape) {
      case HoleShape::kNone:
        return false;
      case HoleShape::kCircle: {
        double dx = x - hole_cx, dy = y - hole_cy;
        return dx * dx + dy * dy <= hole_size * hole_size;
      }
      case HoleShape::kSquare:
        return std::abs(x - hole_cx) <= 0.5 * hole_size &&
               std::abs(y - hole_cy) <= 0.5 * hole_size;
    }
    return false;
  }

  void validate(const GridSpec& grid) const {
    require(left_height > 0 && left_height <= grid.height &&
                right_height > 0 && right_height <= grid.height,
            "invalid-parameters", "taper heights must lie in (0, height]");
    if (!tapered() && !curved())
      require(left_height == right_height, "invalid-parameters",
              "rectangle families need equal left and right heights");
    if (has_hole())
      require(hole_shape != HoleShape::kNone && hole_size > 0,
              "invalid-parameters", "hole families need a hole");
    else
      require(hole_shape == HoleShape::kNone, "invalid-parameters",
              "only hole families may declare a hole");
  }
};

/// Rasterizes a family instance onto the grid by cell-center sampling and
/// validates the result, including that any hole stays strictly interior.
inline GeometryMask build_geometry(const GeometryFamily& fam,
                                   const GridSpec& grid = GridSpec{}) {
  grid.validate();
  fam.validate(grid);

  GeometryMask contour(grid.height, grid.width);
  std::vector<uint8_t> hole(static_cast<size_t>(grid.height) * grid.width, 0);
  for (int r = 0; r < grid.height; ++r) {
    for (int c = 0; c < grid.width; ++c) {
      double x = c + 0.5, y = r + 0.5;
      if (!fam.inside_contour(x, y, grid)) continue;
      contour.set(r, c, 1);
      if (fam.inside_hole(x, y)) hole[static_cast<size_t>(r) * grid.width + c] = 1;
    }
  }

  // A hole cell may only neighbor contour cells: it must not reach the grid
  // border or poke through the outer boundary.
  GeometryMask mask = contour;
  for (int r = 0; r < grid.height; ++r) {
    for (int c = 0; c < grid.width; ++c) {
      if (!hole[static_cast<size_t>(r) * grid.width + c]) continue;
      require(r > 0 && r + 1 < grid.height && c > 0 && c + 1 < grid.width,
              "invalid-parameters", "hole touches the grid border");
      const int dr[4] = {-1, 1, 0, 0};
      const int dc[4] = {0, 0, -1, 1};
      for (int k = 0; k < 4; ++k)
        require(contour.solid(r + dr[k], c + dc[k]), "invalid-parameters",
                "hole touches the outer boundary");
      mask.set(r, c, 0);
    }
  }

  mask.validate();
  return mask;
}

}  // namespace stresslab
