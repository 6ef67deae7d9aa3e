#pragma once

#include <cmath>
#include <numbers>

#include "stresslab/geometry.hpp"
#include "stresslab/material.hpp"

namespace stresslab {

/// Resultant tip load of magnitude q (N) acting at angle theta. theta = 0
/// pulls along +x (away from the wall); positive theta turns toward +y (up).
struct LoadSpec {
  double q = 0.0;
  double theta = 0.0;

  double qx() const { return q * std::cos(theta); }
  double qy() const { return q * std::sin(theta); }

  void validate() const {
    require(q >= 0.0, "invalid-parameters", "load magnitude must be >= 0");
    require(theta >= 0.0 && theta < 2.0 * std::numbers::pi,
            "invalid-parameters", "theta must lie in [0, 2*pi)");
  }
};

/// One cantilever case: geometry clamped at the wall column, loaded on the
/// solid cells of the free-end column. Body forces are zero.
struct ProblemSpec {
  GridSpec grid;
  GeometryMask mask;
  LoadSpec load;
  Material material;

  void validate() const {
    grid.validate();
    load.validate();
    material.validate();
    require(mask.height() == grid.height && mask.width() == grid.width,
            "invalid-parameters", "mask does not match the grid");
    mask.validate();
    require(!mask.load_rows().empty(), "no-load-surface",
            "no solid cell in the free-end column");
  }
};

}  // namespace stresslab
