#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "statfem/sparse.hpp"

namespace statfem {

/// Structured triangulation of the unit square: n cells per side, each
/// square cell split along the bottom-left to top-right diagonal. Node
/// (ix, iy) has index ix * (n+1) + iy (y fastest).
struct Mesh {
  std::size_t n_cells_per_side = 0;
  std::vector<std::pair<double, double>> nodes;      // (x, y), length (n+1)^2
  std::vector<std::array<std::size_t, 3>> cells;     // CCW triangles, 2 n^2
  std::vector<bool> boundary_mask;

  std::size_t n_nodes() const { return nodes.size(); }
  std::size_t nodes_per_side() const { return n_cells_per_side + 1; }
  std::size_t node_index(std::size_t ix, std::size_t iy) const {
    return ix * nodes_per_side() + iy;
  }
};

Mesh build_mesh(std::size_t n_cells_per_side);

/// Assembled statFEM system for one diffusion field: A u = b with additive
/// forcing noise of lumped covariance G (diagonal).
struct FemSystem {
  SparseMatrix a;                   // stiffness, BC applied, symmetric SPD
  std::vector<double> b;            // load, zero at boundary nodes
  std::vector<double> g;            // lumped noise covariance diagonal
  std::vector<double> mass_lumped;  // lumped mass diagonal (unscaled)

  std::size_t dim() const { return b.size(); }
};

/// Element-wise P1 assembly with theta evaluated at element centroids
/// (mean of the three nodal values). Boundary conditions are applied
/// symmetrically: boundary rows/columns of A zeroed with unit diagonal,
/// boundary entries of b zeroed; G is left as assembled everywhere.
FemSystem assemble(const Mesh& mesh, std::span<const double> theta_nodes, double f_const,
                   double beta_xi, bool apply_bc = true);

/// Pointwise observation of the P1 interpolant at interior points.
struct ObservationOperator {
  SparseMatrix h;                               // d_y x d, <=3 nnz per row
  std::vector<std::pair<double, double>> points;
  double r_diag = 0.0;                          // sigma_e^2
};

ObservationOperator build_observation(const Mesh& mesh,
                                      std::span<const std::pair<double, double>> points,
                                      double sigma_e);

}  // namespace statfem
