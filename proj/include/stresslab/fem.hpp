#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <array>
#include <cmath>
#include <vector>

#include "stresslab/encoding.hpp"
#include "stresslab/problem.hpp"

namespace stresslab {

using ElasticityMatrix = Eigen::Matrix3d;
using ElementStiffness = Eigen::Matrix<double, 8, 8>;

/// Plane-strain elasticity matrix,
///   C = E / ((1+nu)(1-2nu)) * [[1-nu, nu, 0], [nu, 1-nu, 0], [0, 0, (1-2nu)/2]].
inline ElasticityMatrix elasticity_matrix(const Material& m) {
  m.validate();
  const double e = m.youngs_modulus, nu = m.poisson_ratio;
  const double f = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
  ElasticityMatrix c;
  c << f * (1.0 - nu), f * nu, 0.0,
       f * nu, f * (1.0 - nu), 0.0,
       0.0, 0.0, f * (1.0 - 2.0 * nu) / 2.0;
  return c;
}

/// Strain-displacement matrix of the bilinear quad at natural coordinates
/// (xi, eta), for a square element of side h. Local node order: bottom-left,
/// bottom-right, top-right, top-left (counter-clockwise, y up); element DOFs
/// are interleaved [u1x, u1y, ..., u4x, u4y].
inline Eigen::Matrix<double, 3, 8> strain_displacement(double xi, double eta,
                                                       double h) {
  static constexpr double kXi[4] = {-1.0, 1.0, 1.0, -1.0};
  static constexpr double kEta[4] = {-1.0, -1.0, 1.0, 1.0};
  Eigen::Matrix<double, 3, 8> b = Eigen::Matrix<double, 3, 8>::Zero();
  for (int i = 0; i < 4; ++i) {
    // dN/dx = (2/h) dN/dxi on the square element
    const double dndx = 0.25 * kXi[i] * (1.0 + kEta[i] * eta) * 2.0 / h;
    const double dndy = 0.25 * kEta[i] * (1.0 + kXi[i] * xi) * 2.0 / h;
    b(0, 2 * i) = dndx;
    b(1, 2 * i + 1) = dndy;
    b(2, 2 * i) = dndy;
    b(2, 2 * i + 1) = dndx;
  }
  return b;
}

enum class Quadrature { kGauss2x2, kOnePoint };

/// Element stiffness of the square bilinear quad, unit thickness. All
/// elements of the uniform grid share this matrix. kOnePoint evaluates the
/// integrand only at the centroid and is kept as a comparison mode.
inline ElementStiffness element_stiffness(const Material& m, const GridSpec& grid,
                                          Quadrature quad = Quadrature::kGauss2x2) {
  const ElasticityMatrix c = elasticity_matrix(m);
  const double h = grid.element_size;
  const double jac = h * h / 4.0;
  ElementStiffness k = ElementStiffness::Zero();
  if (quad == Quadrature::kOnePoint) {
    auto b = strain_displacement(0.0, 0.0, h);
    k = b.transpose() * c * b * (4.0 * jac);
  } else {
    const double g = 1.0 / std::sqrt(3.0);
    for (double xi : {-g, g}) {
      for (double eta : {-g, g}) {
        auto b = strain_displacement(xi, eta, h);
        k += b.transpose() * c * b * jac;
      }
    }
  }
  return k;
}

/// Reduced linear system over the free DOFs. dof_of maps 2*node + {0,1} to a
/// free-DOF index or -1 where the displacement is fixed to zero.
struct GlobalSystem {
  Eigen::SparseMatrix<double> stiffness;
  Eigen::VectorXd force;
  std::vector<int> dof_of;
  int free_dofs = 0;
};

/// Element-to-node connectivity for cell (r, c), in the local node order of
/// strain_displacement. Row r+1 is the bottom edge (y runs up, rows run down).
inline std::array<int, 4> cell_nodes(const GridSpec& grid, int r, int c) {
  return {grid.node_id(r + 1, c), grid.node_id(r + 1, c + 1),
          grid.node_id(r, c + 1), grid.node_id(r, c)};
}

inline GlobalSystem assemble(const ProblemSpec& p) {
  p.validate();
  const GridSpec& g = p.grid;

  // Both DOFs of every wall node bordering a solid cell in column 0 are fixed.
  std::vector<uint8_t> fixed(g.node_count(), 0);
  for (int r = 0; r < g.height; ++r) {
    if (!p.mask.solid(r, 0)) continue;
    fixed[g.node_id(r, 0)] = 1;
    fixed[g.node_id(r + 1, 0)] = 1;
  }

  // Only nodes touching solid cells carry DOFs.
  std::vector<uint8_t> active(g.node_count(), 0);
  for (int r = 0; r < g.height; ++r)
    for (int c = 0; c < g.width; ++c)
      if (p.mask.solid(r, c))
        for (int n : cell_nodes(g, r, c)) active[n] = 1;

  GlobalSystem sys;
  sys.dof_of.assign(2 * g.node_count(), -1);
  for (int n = 0; n < g.node_count(); ++n) {
    if (!active[n] || fixed[n]) continue;
    sys.dof_of[2 * n] = sys.free_dofs++;
    sys.dof_of[2 * n + 1] = sys.free_dofs++;
  }

  const ElementStiffness ke = element_stiffness(p.material, g);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(p.mask.solid_count()) * 64);
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      if (!p.mask.solid(r, c)) continue;
      const auto nodes = cell_nodes(g, r, c);
      int dof[8];
      for (int i = 0; i < 4; ++i) {
        dof[2 * i] = sys.dof_of[2 * nodes[i]];
        dof[2 * i + 1] = sys.dof_of[2 * nodes[i] + 1];
      }
      for (int a = 0; a < 8; ++a) {
        if (dof[a] < 0) continue;
        for (int b = 0; b < 8; ++b)
          if (dof[b] >= 0) trip.emplace_back(dof[a], dof[b], ke(a, b));
      }
    }
  }
  sys.stiffness.resize(sys.free_dofs, sys.free_dofs);
  sys.stiffness.setFromTriplets(trip.begin(), trip.end());

  sys.force = Eigen::VectorXd::Zero(sys.free_dofs);
  for (const NodalForce& f : distribute_load(p.mask, p.load, g)) {
    int ix = sys.dof_of[2 * f.node], iy = sys.dof_of[2 * f.node + 1];
    if (ix >= 0) sys.force[ix] += f.fx;
    if (iy >= 0) sys.force[iy] += f.fy;
  }
  return sys;
}

/// Direct sparse Cholesky-type solve of the reduced system. Returns the full
/// nodal displacement vector [u0x, u0y, u1x, ...] with zeros at fixed and
/// inactive nodes.
inline std::vector<double> solve_displacements(const GlobalSystem& sys) {
  std::vector<double> u(sys.dof_of.size(), 0.0);
  if (sys.free_dofs == 0) return u;

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  solver.compute(sys.stiffness);
  require(solver.info() == Eigen::Success, "singular-system",
          "stiffness factorization failed");
  Eigen::VectorXd x = solver.solve(sys.force);
  require(solver.info() == Eigen::Success, "singular-system",
          "stiffness solve failed");

  const double residual = (sys.stiffness * x - sys.force).norm();
  require(residual <= 1e-8 * std::max(1.0, sys.force.norm()),
          "singular-system", "solution residual out of tolerance");

  for (size_t i = 0; i < sys.dof_of.size(); ++i)
    if (sys.dof_of[i] >= 0) u[i] = x[sys.dof_of[i]];
  return u;
}

struct ElementStress {
  int row = 0, col = 0;
  double sigma_x = 0.0, sigma_y = 0.0, tau_xy = 0.0;
};

inline double von_mises(const ElementStress& s) {
  return std::sqrt(s.sigma_x * s.sigma_x + s.sigma_y * s.sigma_y -
                   s.sigma_x * s.sigma_y + 3.0 * s.tau_xy * s.tau_xy);
}

/// Centroid stress per solid cell, sigma = C B(0,0) u_e. One triple per
/// solid cell, in row-major cell order.
inline std::vector<ElementStress> recover_stresses(const ProblemSpec& p,
                                                   const std::vector<double>& u) {
  require(u.size() == static_cast<size_t>(2 * p.grid.node_count()),
          "shape-mismatch", "displacement vector does not match the grid");
  const ElasticityMatrix c = elasticity_matrix(p.material);
  const Eigen::Matrix<double, 3, 8> b =
      strain_displacement(0.0, 0.0, p.grid.element_size);
  const Eigen::Matrix<double, 3, 8> cb = c * b;

  std::vector<ElementStress> out;
  out.reserve(p.mask.solid_count());
  for (int r = 0; r < p.grid.height; ++r) {
    for (int col = 0; col < p.grid.width; ++col) {
      if (!p.mask.solid(r, col)) continue;
      const auto nodes = cell_nodes(p.grid, r, col);
      Eigen::Matrix<double, 8, 1> ue;
      for (int i = 0; i < 4; ++i) {
        ue[2 * i] = u[2 * nodes[i]];
        ue[2 * i + 1] = u[2 * nodes[i] + 1];
      }
      Eigen::Vector3d sigma = cb * ue;
      out.push_back({r, col, sigma[0], sigma[1], sigma[2]});
    }
  }
  return out;
}

/// Per-element von Mises stress on the grid, zero on void cells.
struct StressField {
  int height = 0, width = 0;
  std::vector<double> values;  // row-major, MPa

  StressField() = default;
  StressField(int h, int w) : height(h), width(w),
      values(static_cast<size_t>(h) * w, 0.0) {}
  double& at(int r, int c) { return values[static_cast<size_t>(r) * width + c]; }
  double at(int r, int c) const { return values[static_cast<size_t>(r) * width + c]; }

  double max() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, v);
    return m;
  }
};

inline StressField solve_problem(const ProblemSpec& p) {
  GlobalSystem sys = assemble(p);
  std::vector<double> u = solve_displacements(sys);
  StressField field(p.grid.height, p.grid.width);
  for (const ElementStress& s : recover_stresses(p, u))
    field.at(s.row, s.col) = von_mises(s);
  return field;
}

}  // namespace stresslab
