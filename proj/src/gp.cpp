#include "statfem/gp.hpp"

#include <cmath>
#include <stdexcept>

namespace statfem {

double default_log_mean(double x, double y) {
  return std::log(1.0 + 0.3 * std::sin(3.14159265358979323846 * (x + y)));
}

Eigen::MatrixXd se_kernel_1d(std::span<const double> coords, double variance,
                             double length_scale) {
  const auto n = static_cast<Eigen::Index>(coords.size());
  Eigen::MatrixXd k(n, n);
  const double inv2l2 = 1.0 / (2.0 * length_scale * length_scale);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double dx = coords[i] - coords[j];
      k(i, j) = variance * std::exp(-dx * dx * inv2l2);
    }
  }
  return k;
}

namespace {

Eigen::MatrixXd jittered_cholesky(Eigen::MatrixXd k, double scale, double& jitter_used) {
  // Jitter escalation: 1e-12 * scale up to 1e-6 * scale, factors of 10.
  double jitter = 0.0;
  for (int attempt = 0; attempt <= 7; ++attempt) {
    Eigen::MatrixXd kj = k;
    if (attempt > 0) {
      jitter = (attempt == 1 ? 1e-12 : jitter * 10.0) * scale;
      kj.diagonal().array() += jitter;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(kj);
    if (llt.info() == Eigen::Success) {
      jitter_used = jitter;
      return llt.matrixL();
    }
    if (attempt >= 1 && jitter >= 1e-6 * scale) break;
  }
  throw std::runtime_error("build_kron_factor: Cholesky failed after jitter escalation");
}

}  // namespace

KroneckerFactor build_kron_factor(std::span<const double> grid_coords_1d, const GpSpec& spec) {
  if (!(spec.sigma > 0.0) || !(spec.length_scale > 0.0)) {
    throw std::invalid_argument("build_kron_factor: sigma and length_scale must be > 0");
  }
  for (std::size_t i = 0; i + 1 < grid_coords_1d.size(); ++i) {
    if (!(grid_coords_1d[i] < grid_coords_1d[i + 1])) {
      throw std::invalid_argument("build_kron_factor: coordinates must be sorted and distinct");
    }
  }
  KroneckerFactor f;
  f.coords.assign(grid_coords_1d.begin(), grid_coords_1d.end());
  const double s2 = spec.sigma * spec.sigma;
  double j1 = 0.0, j2 = 0.0;
  f.l1 = jittered_cholesky(se_kernel_1d(grid_coords_1d, s2, spec.length_scale), s2, j1);
  f.l2 = jittered_cholesky(se_kernel_1d(grid_coords_1d, 1.0, spec.length_scale), 1.0, j2);
  f.jitter = std::max(j1, j2);
  return f;
}

ThetaField sample_theta(const KroneckerFactor& factor, const GpSpec& spec, RngStream& rng) {
  const auto nm = static_cast<Eigen::Index>(factor.grid_size());
  // Z filled column-major so vec(Z) is the draw order.
  Eigen::MatrixXd z(nm, nm);
  for (Eigen::Index c = 0; c < nm; ++c) {
    for (Eigen::Index r = 0; r < nm; ++r) z(r, c) = rng.normal();
  }
  const Eigen::MatrixXd field = factor.l2 * z * factor.l1.transpose();

  ThetaField theta;
  const std::size_t d = static_cast<std::size_t>(nm) * static_cast<std::size_t>(nm);
  theta.log_values.resize(d);
  theta.values.resize(d);
  for (Eigen::Index ix = 0; ix < nm; ++ix) {
    for (Eigen::Index iy = 0; iy < nm; ++iy) {
      const std::size_t idx = static_cast<std::size_t>(ix) * nm + static_cast<std::size_t>(iy);
      const double m = spec.mean_fn(factor.coords[static_cast<std::size_t>(ix)],
                                    factor.coords[static_cast<std::size_t>(iy)]);
      theta.log_values[idx] = m + field(iy, ix);
      theta.values[idx] = std::exp(theta.log_values[idx]);
    }
  }
  return theta;
}

std::vector<double> mean_theta_field(std::span<const double> grid_coords_1d, const GpSpec& spec) {
  const std::size_t nm = grid_coords_1d.size();
  std::vector<double> theta(nm * nm);
  for (std::size_t ix = 0; ix < nm; ++ix) {
    for (std::size_t iy = 0; iy < nm; ++iy) {
      theta[ix * nm + iy] = std::exp(spec.mean_fn(grid_coords_1d[ix], grid_coords_1d[iy]));
    }
  }
  return theta;
}

}  // namespace statfem
