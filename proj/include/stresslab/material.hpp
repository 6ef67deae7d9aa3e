#pragma once

#include "stresslab/error.hpp"

namespace stresslab {

/// Linear isotropic material. Units: MPa for the modulus.
struct Material {
  double youngs_modulus = 200000.0;
  double poisson_ratio = 0.3;

  void validate() const {
    require(youngs_modulus > 0.0, "invalid-parameters",
            "Young's modulus must be positive");
    require(poisson_ratio >= 0.0, "invalid-parameters",
            "Poisson's ratio must be non-negative");
    require(poisson_ratio < 0.5, "incompressible-material",
            "plane-strain elasticity matrix is singular at nu >= 0.5");
  }
};

}  // namespace stresslab
