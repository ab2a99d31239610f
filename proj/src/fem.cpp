#include "statfem/fem.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace statfem {

Mesh build_mesh(std::size_t n) {
  if (n == 0) throw std::invalid_argument("build_mesh: n_cells_per_side must be >= 1");
  Mesh mesh;
  mesh.n_cells_per_side = n;
  const std::size_t nm = n + 1;
  const double h = 1.0 / static_cast<double>(n);
  mesh.nodes.resize(nm * nm);
  mesh.boundary_mask.resize(nm * nm);
  for (std::size_t ix = 0; ix < nm; ++ix) {
    for (std::size_t iy = 0; iy < nm; ++iy) {
      const std::size_t idx = ix * nm + iy;
      mesh.nodes[idx] = {static_cast<double>(ix) * h, static_cast<double>(iy) * h};
      mesh.boundary_mask[idx] = (ix == 0 || ix == n || iy == 0 || iy == n);
    }
  }
  mesh.cells.reserve(2 * n * n);
  for (std::size_t ix = 0; ix < n; ++ix) {
    for (std::size_t iy = 0; iy < n; ++iy) {
      const std::size_t v00 = mesh.node_index(ix, iy);
      const std::size_t v10 = mesh.node_index(ix + 1, iy);
      const std::size_t v01 = mesh.node_index(ix, iy + 1);
      const std::size_t v11 = mesh.node_index(ix + 1, iy + 1);
      mesh.cells.push_back({v00, v10, v11});
      mesh.cells.push_back({v00, v11, v01});
    }
  }
  return mesh;
}

FemSystem assemble(const Mesh& mesh, std::span<const double> theta_nodes, double f_const,
                   double beta_xi, bool apply_bc) {
  const std::size_t d = mesh.n_nodes();
  if (theta_nodes.size() != d) {
    throw std::invalid_argument("assemble: theta length != node count");
  }
  for (std::size_t i = 0; i < d; ++i) {
    if (!(theta_nodes[i] > 0.0)) {
      throw std::invalid_argument("assemble: non-positive theta at node " + std::to_string(i) +
                                  " violates ellipticity");
    }
  }

  FemSystem sys;
  sys.b.assign(d, 0.0);
  sys.g.assign(d, 0.0);
  sys.mass_lumped.assign(d, 0.0);

  std::vector<std::size_t> rows, cols;
  std::vector<double> vals;
  rows.reserve(mesh.cells.size() * 9);
  cols.reserve(mesh.cells.size() * 9);
  vals.reserve(mesh.cells.size() * 9);

  for (const auto& cell : mesh.cells) {
    const auto [x0, y0] = mesh.nodes[cell[0]];
    const auto [x1, y1] = mesh.nodes[cell[1]];
    const auto [x2, y2] = mesh.nodes[cell[2]];
    const double det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
    const double area = 0.5 * det;
    // P1 basis gradients.
    const std::array<double, 3> gx = {(y1 - y2) / det, (y2 - y0) / det, (y0 - y1) / det};
    const std::array<double, 3> gy = {(x2 - x1) / det, (x0 - x2) / det, (x1 - x0) / det};
    const double theta_c =
        (theta_nodes[cell[0]] + theta_nodes[cell[1]] + theta_nodes[cell[2]]) / 3.0;
    for (std::size_t i = 0; i < 3; ++i) {
      const bool bi = apply_bc && mesh.boundary_mask[cell[i]];
      for (std::size_t j = 0; j < 3; ++j) {
        if (bi || (apply_bc && mesh.boundary_mask[cell[j]])) continue;  // symmetric elimination
        rows.push_back(cell[i]);
        cols.push_back(cell[j]);
        vals.push_back(theta_c * area * (gx[i] * gx[j] + gy[i] * gy[j]));
      }
      if (!bi) sys.b[cell[i]] += f_const * area / 3.0;  // load, zeroed on boundary
      sys.mass_lumped[cell[i]] += area / 3.0;  // consistent mass row sum
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    sys.g[i] = beta_xi * beta_xi * sys.mass_lumped[i];
    if (apply_bc && mesh.boundary_mask[i]) {
      rows.push_back(i);
      cols.push_back(i);
      vals.push_back(1.0);
    }
  }
  sys.a = SparseMatrix::from_triplets(d, d, std::move(rows), std::move(cols), std::move(vals),
                                      /*symmetric=*/true);
  return sys;
}

ObservationOperator build_observation(const Mesh& mesh,
                                      std::span<const std::pair<double, double>> points,
                                      double sigma_e) {
  if (!(sigma_e > 0.0)) throw std::invalid_argument("build_observation: sigma_e must be > 0");
  const std::size_t n = mesh.n_cells_per_side;
  const double h = 1.0 / static_cast<double>(n);

  std::vector<std::size_t> rows, cols;
  std::vector<double> vals;
  for (std::size_t j = 0; j < points.size(); ++j) {
    const auto [x, y] = points[j];
    if (!(x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0)) {
      throw std::invalid_argument("build_observation: point " + std::to_string(j) +
                                  " not strictly interior");
    }
    std::size_t ix = std::min(static_cast<std::size_t>(x / h), n - 1);
    std::size_t iy = std::min(static_cast<std::size_t>(y / h), n - 1);
    const double lx = x / h - static_cast<double>(ix);
    const double ly = y / h - static_cast<double>(iy);
    std::array<std::size_t, 3> verts;
    std::array<double, 3> w;
    if (ly <= lx) {  // triangle (v00, v10, v11)
      verts = {mesh.node_index(ix, iy), mesh.node_index(ix + 1, iy),
               mesh.node_index(ix + 1, iy + 1)};
      w = {1.0 - lx, lx - ly, ly};
    } else {  // triangle (v00, v11, v01)
      verts = {mesh.node_index(ix, iy), mesh.node_index(ix + 1, iy + 1),
               mesh.node_index(ix, iy + 1)};
      w = {1.0 - ly, lx, ly - lx};
    }
    for (std::size_t k = 0; k < 3; ++k) {
      if (w[k] == 0.0) continue;
      rows.push_back(j);
      cols.push_back(verts[k]);
      vals.push_back(w[k]);
    }
  }
  ObservationOperator obs;
  obs.h = SparseMatrix::from_triplets(points.size(), mesh.n_nodes(), std::move(rows),
                                      std::move(cols), std::move(vals));
  obs.points.assign(points.begin(), points.end());
  obs.r_diag = sigma_e * sigma_e;
  return obs;
}

}  // namespace statfem
