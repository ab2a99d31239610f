#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "statfem/fem.hpp"
#include "statfem/gp.hpp"
#include "statfem/samplers.hpp"
#include "statfem/sparse.hpp"

namespace statfem {

struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Bound-vs-measured sweep over an iteration grid, with the exact constants
/// used to evaluate the bound.
struct BoundReport {
  std::vector<std::size_t> k_grid;
  std::vector<double> measured;
  std::vector<double> bound;
  double m_theta = 0.0;
  double l_theta = 0.0;
  double kappa = 0.0;
  double eta = 0.0;
  std::size_t dim = 0;

  std::size_t violations() const;
};

Eigen::MatrixXd to_dense(const SparseMatrix& a);
/// P = A^T G^{-1} A as a dense matrix.
Eigen::MatrixXd dense_precision(const FemSystem& system);
/// A^T G^{-1} b, the affine part of the Langevin drift.
Eigen::VectorXd dense_precision_rhs(const FemSystem& system);

/// Sample autocorrelation at lags 0..max_lag (lag 0 is 1). Throws on a
/// zero-variance series.
std::vector<double> acf(std::span<const double> series, std::size_t max_lag);

/// N / (1 + 2 sum rho_l), truncated by Geyer's initial-positive-sequence
/// rule. Antithetic chains can report ESS > N.
double ess(std::span<const double> series);

/// KL(p || q) between Gaussians, closed form. Throws if q.cov is singular.
double gaussian_kl(const GaussianMoments& p, const GaussianMoments& q);

/// 2-Wasserstein distance between Gaussians; matrix square roots via
/// symmetric eigendecomposition with eigenvalues clamped at zero.
double gaussian_w2(const GaussianMoments& p, const GaussianMoments& q);

/// Exact moments of the preconditioned ULA chain after k steps:
/// mu <- (I - eta M P) mu + eta M pb,  Sigma <- B Sigma B^T + 2 eta M.
/// Dense only (d <= 200); large k handled by repeated squaring of the
/// affine map.
GaussianMoments ula_moment_oracle(const Eigen::MatrixXd& precision, const Eigen::VectorXd& pb,
                                  const Eigen::MatrixXd& m_precond, double eta,
                                  const GaussianMoments& init, std::size_t k);

/// KL(p_k || p(.|theta)) vs e^{-m eta k} KL_0 + 8 eta d L kappa, with m, L
/// from the dense spectrum of P. Requires eta <= m/(4 L^2).
BoundReport verify_kl_bound(const Eigen::MatrixXd& precision, const Eigen::VectorXd& pb,
                            double eta, std::span<const std::size_t> k_grid,
                            const GaussianMoments& p0);

/// W2(p_k, p(.|theta)) vs sqrt(2 (1-m eta)^{2k} W2_0^2 + (49/9) kappa^2 eta d).
/// Requires eta <= 2/(m + L).
BoundReport verify_w2_bound(const Eigen::MatrixXd& precision, const Eigen::VectorXd& pb,
                            double eta, std::span<const std::size_t> k_grid,
                            const GaussianMoments& p0);

struct ConditionRow {
  std::size_t mesh_n = 0;
  double e_kappa = 0.0;
  double kappa_q25 = 0.0;
  double kappa_q75 = 0.0;
  double e_kappa_precond = 0.0;
  double kappa_precond_q25 = 0.0;
  double kappa_precond_q75 = 0.0;
};

/// MC estimate of E[kappa_theta] for A^T G^{-1} A and its mean-theta
/// preconditioned counterpart, with 25/75% quantiles, per mesh level.
std::vector<ConditionRow> condition_study(std::span<const std::size_t> mesh_levels,
                                          const GpSpec& gp, std::size_t n_theta_samples,
                                          std::uint64_t seed, double f_const = 1.0,
                                          double beta_xi = 0.05);

/// Per-coordinate sample mean and variance of a K x d row-major sample block.
std::pair<Eigen::VectorXd, Eigen::VectorXd> sample_moments(std::span<const double> samples,
                                                           std::size_t dim);

/// Relative l2 errors of the chain's sample mean and elementwise variance
/// against a reference sample set.
std::pair<double, double> summary_errors(const ChainRecord& chain, const ChainRecord& reference);

}  // namespace statfem
