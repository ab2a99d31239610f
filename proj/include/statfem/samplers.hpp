#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "statfem/fem.hpp"
#include "statfem/gp.hpp"
#include "statfem/potentials.hpp"
#include "statfem/rng.hpp"
#include "statfem/sparse.hpp"

namespace statfem {

enum class SamplerKind { ula, pula, mala, pmala, pcn, exact };

struct SamplerConfig {
  SamplerKind kind = SamplerKind::pula;
  double eta = 0.0;          // stepsize; <= 0 means "auto"
  std::size_t n_inner = 10;
  PreconditionerKind precond = PreconditionerKind::identity;
  double target_accept = 0.5;
  double pcn_beta = 0.5;
  std::size_t n_warmup = 0;  // outer warmup iterations (with adaptation for MH kernels)
  std::size_t adapt_batch = 50;
};

struct ChainRecord {
  std::size_t dim = 0;
  std::vector<double> samples;            // K x d, row-major, outer samples only
  std::vector<std::uint64_t> theta_keys;  // RNG key of the theta draw per outer step
  double accept_rate = 0.0;
  std::vector<double> eta_trace;          // stepsize after each adaptation batch
  double eta_final = 0.0;
  double wall_seconds = 0.0;

  std::size_t n_samples() const { return dim == 0 ? 0 : samples.size() / dim; }
  std::span<const double> sample(std::size_t k) const {
    return std::span<const double>(samples).subspan(k * dim, dim);
  }
};

/// Preconditioned ULA update in place: u <- u - eta M grad Phi + sqrt(2 eta) M^{1/2} Z.
/// `noise_scale` is a test hook (0 suppresses the diffusion term). Throws on
/// a non-finite iterate.
void ula_step(std::vector<double>& u, const std::function<std::vector<double>(std::span<const double>)>& grad,
              const Preconditioner& precond, double eta, RngStream& rng,
              double noise_scale = 1.0);

/// MALA log acceptance ratio pieces: the proposal is N(u - eta M grad, 2 eta M);
/// returns log q(from | to) - log q(to | from) + log pi(to) - log pi(from)
/// evaluated on the log scale. Exposed for the detailed-balance tests.
double mala_log_accept(std::span<const double> u_from, std::span<const double> u_to,
                       double phi_from, double phi_to,
                       const std::function<std::vector<double>(std::span<const double>)>& grad,
                       const Preconditioner& precond, double eta);

/// One MALA transition. `phi_u` caches Phi(u) and is updated on acceptance.
bool mala_step(std::vector<double>& u, double& phi_u,
               const std::function<double(std::span<const double>)>& phi,
               const std::function<std::vector<double>(std::span<const double>)>& grad,
               const Preconditioner& precond, double eta, RngStream& rng);

/// Conditional Gaussian p(u | theta) = N(A^{-1} b, A^{-1} G A^{-T}) with a
/// banded factor of A; one band solve per draw.
class ConditionalGaussian {
 public:
  explicit ConditionalGaussian(const FemSystem& system);
  const std::vector<double>& mean() const { return mean_; }
  /// u = A^{-1}(b + G^{1/2} z)
  std::vector<double> sample(RngStream& rng) const;

 private:
  const FemSystem* system_;
  BandedCholesky chol_a_;
  std::vector<double> mean_;
  std::vector<double> g_sqrt_;
};

/// One pCN transition; alpha is a pure likelihood ratio. `lik` may be null
/// (constant likelihood: every proposal accepted).
bool pcn_step(std::vector<double>& u, double& lik_phi_u, const ConditionalGaussian& prior,
              const Likelihood* lik, double beta, RngStream& rng);

std::vector<double> exact_prior_conditional_sample(const ConditionalGaussian& prior,
                                                   RngStream& rng);

/// Conditional posterior N(m, C), C^{-1} = A^T G^{-1} A + n_obs H^T R^{-1} H.
class ConditionalPosteriorGaussian {
 public:
  ConditionalPosteriorGaussian(const FemSystem& system, const ObservationOperator& obs,
                               const Eigen::MatrixXd& data);
  const std::vector<double>& mean() const { return mean_; }
  std::vector<double> sample(RngStream& rng) const;

 private:
  BandedCholesky chol_c_inv_;
  std::vector<double> mean_;
};

std::vector<double> exact_posterior_conditional_sample(const FemSystem& system,
                                                       const ObservationOperator& obs,
                                                       const Eigen::MatrixXd& data,
                                                       RngStream& rng);

/// Warmup stepsize rule: eta <- eta exp(0.1 (rate - target)).
double adapt_stepsize(double accept_rate, double eta, double target = 0.5);

/// Everything needed to rebuild the conditional model for a fresh theta draw.
struct Model {
  const Mesh* mesh = nullptr;
  const KroneckerFactor* gp_factor = nullptr;
  const GpSpec* gp_spec = nullptr;
  double f_const = 1.0;
  double beta_xi = 0.05;
  /// Build the likelihood bound to a given theta-system (data is shared).
  const Likelihood* likelihood = nullptr;  // null for prior-mode sampling

  FemSystem assemble_for(const ThetaField& theta) const;
};

/// Algorithm-1 driver: per outer step draw theta, reassemble A_theta, run
/// n_inner kernel steps warm-started from the previous outer sample, record
/// (u_k, theta_k). Handles every SamplerKind; MH kernels adapt their
/// stepsize (or pCN beta) during warmup in batches.
ChainRecord run_algorithm1(const Model& model, const Preconditioner& precond,
                           const SamplerConfig& cfg, std::size_t n_samples,
                           std::span<const double> u0, RngStream rng);

/// Synthetic data: per column, fresh theta and exact conditional draw u_i;
/// linear y_i = scale H u_i + e_i, nonlinear y_i = S(H (scale u_i)) + e_i
/// (scale first, then sensor).
Eigen::MatrixXd generate_data(const Model& model, const ObservationOperator& obs,
                              std::size_t n_obs, double scale, bool nonlinear, RngStream& rng,
                              double sigmoid_sat = 0.1, double sigmoid_gain = 100.0,
                              double sigmoid_center = 0.05);

/// Stability-probed default stepsize for unpreconditioned ULA: halve from the
/// m/(4 L^2) estimate until 100 trial steps stay finite.
double auto_ula_stepsize(const Model& model, const Preconditioner& precond,
                         std::span<const double> u0, RngStream rng);

}  // namespace statfem
