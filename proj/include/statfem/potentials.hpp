#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "statfem/fem.hpp"
#include "statfem/sparse.hpp"

namespace statfem {

/// Phi_theta(u) = 1/2 (A u - b)^T G^{-1} (A u - b), the negative log of the
/// conditional Gaussian p(u | theta) up to a constant.
struct PriorPotential {
  const FemSystem* system = nullptr;

  double phi(std::span<const double> u) const;
  /// A^T G^{-1} (A u - b); two sparse mat-vecs and a diagonal scale.
  std::vector<double> grad(std::span<const double> u) const;
  /// v -> A^T G^{-1} A v (Hessian action).
  void hessian_apply(std::span<const double> v, std::span<double> out) const;
};

/// Data-term interface shared by the samplers: negative log-likelihood and
/// its derivatives, summed over the n_obs observation vectors.
class Likelihood {
 public:
  virtual ~Likelihood() = default;
  virtual double phi(std::span<const double> u) const = 0;
  virtual void add_grad(std::span<const double> u, std::span<double> grad) const = 0;
  /// out += J(u_lin)^T R^{-1} J(u_lin) v, the Gauss-Newton Hessian action.
  virtual void add_gn_hessian_apply(std::span<const double> u_lin, std::span<const double> v,
                                    std::span<double> out) const = 0;
  virtual std::size_t n_obs() const = 0;
  virtual const ObservationOperator& obs() const = 0;
};

class LinearLikelihood final : public Likelihood {
 public:
  LinearLikelihood(const ObservationOperator& obs, Eigen::MatrixXd data);

  double phi(std::span<const double> u) const override;
  void add_grad(std::span<const double> u, std::span<double> grad) const override;
  void add_gn_hessian_apply(std::span<const double> u_lin, std::span<const double> v,
                            std::span<double> out) const override;
  std::size_t n_obs() const override { return n_obs_; }
  const ObservationOperator& obs() const override { return *obs_; }
  const Eigen::MatrixXd& data() const { return data_; }
  std::span<const double> sum_y() const { return sum_y_; }

 private:
  const ObservationOperator* obs_;
  Eigen::MatrixXd data_;  // d_y x n_obs
  std::size_t n_obs_;
  std::vector<double> sum_y_;
  double sum_y2_ = 0.0;
};

/// Saturating sensor: H(u)_j = S((Hu)_j), S(x) = sat / (1 + exp(-gain (x - center))).
class SigmoidLikelihood final : public Likelihood {
 public:
  SigmoidLikelihood(const ObservationOperator& obs, Eigen::MatrixXd data, double sat = 0.1,
                    double gain = 100.0, double center = 0.05);

  static double sigmoid(double x, double sat, double gain, double center);

  std::vector<double> observe(std::span<const double> u) const;  // H(u)
  double phi(std::span<const double> u) const override;
  void add_grad(std::span<const double> u, std::span<double> grad) const override;
  void add_gn_hessian_apply(std::span<const double> u_lin, std::span<const double> v,
                            std::span<double> out) const override;
  std::size_t n_obs() const override { return n_obs_; }
  const ObservationOperator& obs() const override { return *obs_; }

  double sat() const { return sat_; }
  double gain() const { return gain_; }
  double center() const { return center_; }

 private:
  const ObservationOperator* obs_;
  Eigen::MatrixXd data_;
  std::size_t n_obs_;
  std::vector<double> sum_y_;
  double sum_y2_ = 0.0;
  double sat_, gain_, center_;
};

double phi_posterior(const PriorPotential& p, const Likelihood& lik, std::span<const double> u);
std::vector<double> grad_phi_posterior(const PriorPotential& p, const Likelihood* lik,
                                       std::span<const double> u);

/// Gauss-Newton minimisation of Phi^y at fixed theta; CG inner solves on the
/// GN Hessian, Armijo backtracking along the GN direction. Terminates when
/// ||grad|| <= tol (1 + ||grad(u0)||).
std::vector<double> map_estimate(const PriorPotential& p, const Likelihood& lik,
                                 std::span<const double> u0, double tol,
                                 std::size_t max_gn_steps = 200);

enum class PreconditionerKind { identity, prior_mean_theta, posterior_mean_theta, gauss_newton_map };

/// SPD preconditioner M with a square-root factor S (M = S S^T) and the
/// inverse action needed by MALA's proposal density.
class Preconditioner {
 public:
  static Preconditioner make_identity(std::size_t dim);
  /// M = A^{-1} G A^{-T} built at the mean-theta system.
  static Preconditioner make_prior(const FemSystem& system_at_mean_theta);
  /// M^{-1} = A^T G^{-1} A + n_obs H^T R^{-1} H.
  static Preconditioner make_posterior(const FemSystem& system_at_mean_theta,
                                       const ObservationOperator& obs, std::size_t n_obs);
  /// M^{-1} = A^T G^{-1} A + n_obs J(u*)^T R^{-1} J(u*), sigmoid Jacobian at the MAP.
  static Preconditioner make_gauss_newton(const FemSystem& system_at_mean_theta,
                                          const SigmoidLikelihood& lik,
                                          std::span<const double> u_star);

  PreconditionerKind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }

  void apply_m(std::span<const double> v, std::span<double> out) const;
  void apply_sqrt(std::span<const double> w, std::span<double> out) const;
  void apply_m_inverse(std::span<const double> v, std::span<double> out) const;

 private:
  Preconditioner() = default;
  PreconditionerKind kind_ = PreconditionerKind::identity;
  std::size_t dim_ = 0;
  // prior kind
  std::shared_ptr<SparseMatrix> a_;
  std::vector<double> g_;
  std::shared_ptr<BandedCholesky> chol_a_;
  std::vector<double> g_sqrt_;
  // posterior kinds
  std::shared_ptr<SparseMatrix> m_inv_;
  std::shared_ptr<BandedCholesky> chol_m_inv_;
};

Preconditioner build_preconditioner(PreconditionerKind kind, const FemSystem& system_at_mean_theta,
                                    const ObservationOperator* obs, const Likelihood* lik,
                                    std::span<const double> u_star);

}  // namespace statfem
