#pragma once

#include <Eigen/Dense>
#include <functional>
#include <span>
#include <vector>

#include "statfem/rng.hpp"

namespace statfem {

/// Log-mean used throughout the experiments: log(1 + 0.3 sin(pi (x + y))).
double default_log_mean(double x, double y);

struct GpSpec {
  double sigma = 0.1;
  double length_scale = 0.2;
  std::function<double(double, double)> mean_fn = default_log_mean;
};

/// Per-axis Cholesky factors of the separable squared-exponential kernel,
/// K = K1 (x-axis) Kronecker K2 (y-axis).
struct KroneckerFactor {
  Eigen::MatrixXd l1;  // x axis
  Eigen::MatrixXd l2;  // y axis
  std::vector<double> coords;  // shared 1D grid coordinates
  double jitter = 0.0;

  std::size_t grid_size() const { return coords.size(); }
};

struct ThetaField {
  std::vector<double> values;      // exp(log_values)
  std::vector<double> log_values;
};

/// 1D squared-exponential kernel matrix with marginal variance `variance`.
/// The 2D kernel separates as K1 (variance sigma^2) times K2 (variance 1).
Eigen::MatrixXd se_kernel_1d(std::span<const double> coords, double variance,
                             double length_scale);

KroneckerFactor build_kron_factor(std::span<const double> grid_coords_1d, const GpSpec& spec);

/// vec-trick draw: log theta = mean + vec(L2 Z L1^T) for Z ~ N(0, I), so the
/// Kronecker covariance is never materialised. Node (ix, iy) maps to index
/// ix * n_m + iy, matching Mesh::node_index.
ThetaField sample_theta(const KroneckerFactor& factor, const GpSpec& spec, RngStream& rng);

/// Deterministic field at the exponentiated log-mean (theta-bar).
std::vector<double> mean_theta_field(std::span<const double> grid_coords_1d, const GpSpec& spec);

}  // namespace statfem
