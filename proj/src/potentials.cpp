#include "statfem/potentials.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace statfem {

double PriorPotential::phi(std::span<const double> u) const {
  const auto& sys = *system;
  std::vector<double> r = spmv(sys.a, u);
  double acc = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double e = r[i] - sys.b[i];
    acc += e * e / sys.g[i];
  }
  return 0.5 * acc;
}

std::vector<double> PriorPotential::grad(std::span<const double> u) const {
  const auto& sys = *system;
  std::vector<double> r = spmv(sys.a, u);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = (r[i] - sys.b[i]) / sys.g[i];
  return spmv(sys.a, r);  // A symmetric
}

void PriorPotential::hessian_apply(std::span<const double> v, std::span<double> out) const {
  const auto& sys = *system;
  std::vector<double> r = spmv(sys.a, v);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] /= sys.g[i];
  spmv(sys.a, r, out);
}

LinearLikelihood::LinearLikelihood(const ObservationOperator& obs, Eigen::MatrixXd data)
    : obs_(&obs), data_(std::move(data)), n_obs_(static_cast<std::size_t>(data_.cols())) {
  if (static_cast<std::size_t>(data_.rows()) != obs.h.n_rows) {
    throw std::invalid_argument("LinearLikelihood: data rows != d_y");
  }
  sum_y_.assign(obs.h.n_rows, 0.0);
  for (Eigen::Index c = 0; c < data_.cols(); ++c) {
    for (Eigen::Index r = 0; r < data_.rows(); ++r) {
      sum_y_[static_cast<std::size_t>(r)] += data_(r, c);
      sum_y2_ += data_(r, c) * data_(r, c);
    }
  }
}

double LinearLikelihood::phi(std::span<const double> u) const {
  const std::vector<double> hu = spmv(obs_->h, u);
  double hu2 = 0.0, hu_sy = 0.0;
  for (std::size_t j = 0; j < hu.size(); ++j) {
    hu2 += hu[j] * hu[j];
    hu_sy += hu[j] * sum_y_[j];
  }
  return (static_cast<double>(n_obs_) * hu2 - 2.0 * hu_sy + sum_y2_) / (2.0 * obs_->r_diag);
}

void LinearLikelihood::add_grad(std::span<const double> u, std::span<double> grad) const {
  std::vector<double> hu = spmv(obs_->h, u);
  for (std::size_t j = 0; j < hu.size(); ++j) {
    hu[j] = (static_cast<double>(n_obs_) * hu[j] - sum_y_[j]) / obs_->r_diag;
  }
  const std::vector<double> ht = spmv_transpose(obs_->h, hu);
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += ht[i];
}

void LinearLikelihood::add_gn_hessian_apply(std::span<const double>, std::span<const double> v,
                                            std::span<double> out) const {
  std::vector<double> hv = spmv(obs_->h, v);
  for (double& x : hv) x *= static_cast<double>(n_obs_) / obs_->r_diag;
  const std::vector<double> ht = spmv_transpose(obs_->h, hv);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += ht[i];
}

SigmoidLikelihood::SigmoidLikelihood(const ObservationOperator& obs, Eigen::MatrixXd data,
                                     double sat, double gain, double center)
    : obs_(&obs),
      data_(std::move(data)),
      n_obs_(static_cast<std::size_t>(data_.cols())),
      sat_(sat),
      gain_(gain),
      center_(center) {
  if (static_cast<std::size_t>(data_.rows()) != obs.h.n_rows) {
    throw std::invalid_argument("SigmoidLikelihood: data rows != d_y");
  }
  sum_y_.assign(obs.h.n_rows, 0.0);
  for (Eigen::Index c = 0; c < data_.cols(); ++c) {
    for (Eigen::Index r = 0; r < data_.rows(); ++r) {
      sum_y_[static_cast<std::size_t>(r)] += data_(r, c);
      sum_y2_ += data_(r, c) * data_(r, c);
    }
  }
}

double SigmoidLikelihood::sigmoid(double x, double sat, double gain, double center) {
  return sat / (1.0 + std::exp(-gain * (x - center)));
}

std::vector<double> SigmoidLikelihood::observe(std::span<const double> u) const {
  std::vector<double> hu = spmv(obs_->h, u);
  for (double& x : hu) x = sigmoid(x, sat_, gain_, center_);
  return hu;
}

double SigmoidLikelihood::phi(std::span<const double> u) const {
  const std::vector<double> s = observe(u);
  double s2 = 0.0, s_sy = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    s2 += s[j] * s[j];
    s_sy += s[j] * sum_y_[j];
  }
  return (static_cast<double>(n_obs_) * s2 - 2.0 * s_sy + sum_y2_) / (2.0 * obs_->r_diag);
}

void SigmoidLikelihood::add_grad(std::span<const double> u, std::span<double> grad) const {
  std::vector<double> hu = spmv(obs_->h, u);
  std::vector<double> w(hu.size());
  for (std::size_t j = 0; j < hu.size(); ++j) {
    const double s = sigmoid(hu[j], sat_, gain_, center_);
    const double sp = gain_ * s * (1.0 - s / sat_);  // S'
    w[j] = sp * (static_cast<double>(n_obs_) * s - sum_y_[j]) / obs_->r_diag;
  }
  const std::vector<double> ht = spmv_transpose(obs_->h, w);
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += ht[i];
}

void SigmoidLikelihood::add_gn_hessian_apply(std::span<const double> u_lin,
                                             std::span<const double> v,
                                             std::span<double> out) const {
  const std::vector<double> hu = spmv(obs_->h, u_lin);
  std::vector<double> hv = spmv(obs_->h, v);
  for (std::size_t j = 0; j < hv.size(); ++j) {
    const double s = sigmoid(hu[j], sat_, gain_, center_);
    const double sp = gain_ * s * (1.0 - s / sat_);
    hv[j] *= static_cast<double>(n_obs_) * sp * sp / obs_->r_diag;
  }
  const std::vector<double> ht = spmv_transpose(obs_->h, hv);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += ht[i];
}

double phi_posterior(const PriorPotential& p, const Likelihood& lik, std::span<const double> u) {
  return p.phi(u) + lik.phi(u);
}

std::vector<double> grad_phi_posterior(const PriorPotential& p, const Likelihood* lik,
                                       std::span<const double> u) {
  std::vector<double> g = p.grad(u);
  if (lik) lik->add_grad(u, g);
  return g;
}

namespace {
double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}
}  // namespace

std::vector<double> map_estimate(const PriorPotential& p, const Likelihood& lik,
                                 std::span<const double> u0, double tol,
                                 std::size_t max_gn_steps) {
  if (!(tol > 0.0)) throw std::invalid_argument("map_estimate: tol must be > 0");
  std::vector<double> u(u0.begin(), u0.end());
  std::vector<double> g = grad_phi_posterior(p, &lik, u);
  const double g0_norm = norm2(g);
  const double target = tol * (1.0 + g0_norm);
  double phi_u = phi_posterior(p, lik, u);

  for (std::size_t step = 0; step < max_gn_steps; ++step) {
    if (norm2(g) <= target) return u;
    auto gn_apply = [&](std::span<const double> v, std::span<double> out) {
      p.hessian_apply(v, out);
      lik.add_gn_hessian_apply(u, v, out);
    };
    std::vector<double> rhs(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) rhs[i] = -g[i];
    const auto delta = cg_solve(gn_apply, rhs, 1e-8, 10000).x;

    // Armijo backtracking along the GN direction.
    double slope = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) slope += g[i] * delta[i];
    double alpha = 1.0;
    std::vector<double> trial(u.size());
    bool moved = false;
    for (int bt = 0; bt < 40; ++bt) {
      for (std::size_t i = 0; i < u.size(); ++i) trial[i] = u[i] + alpha * delta[i];
      const double phi_t = phi_posterior(p, lik, trial);
      if (phi_t <= phi_u + 1e-4 * alpha * slope) {
        u = trial;
        phi_u = phi_t;
        moved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!moved) break;
    g = grad_phi_posterior(p, &lik, u);
  }
  if (norm2(g) <= target) return u;
  throw std::runtime_error("map_estimate: no convergence, final gradient norm " +
                           std::to_string(norm2(g)));
}

Preconditioner Preconditioner::make_identity(std::size_t dim) {
  Preconditioner pc;
  pc.kind_ = PreconditionerKind::identity;
  pc.dim_ = dim;
  return pc;
}

Preconditioner Preconditioner::make_prior(const FemSystem& system) {
  Preconditioner pc;
  pc.kind_ = PreconditionerKind::prior_mean_theta;
  pc.dim_ = system.dim();
  pc.a_ = std::make_shared<SparseMatrix>(system.a);
  pc.g_ = system.g;
  pc.chol_a_ = std::make_shared<BandedCholesky>(system.a);
  pc.g_sqrt_.resize(system.g.size());
  for (std::size_t i = 0; i < system.g.size(); ++i) pc.g_sqrt_[i] = std::sqrt(system.g[i]);
  return pc;
}

namespace {
SparseMatrix posterior_precision(const FemSystem& system, const SparseMatrix& h,
                                 std::span<const double> row_weights) {
  std::vector<double> ginv(system.g.size());
  for (std::size_t i = 0; i < ginv.size(); ++i) ginv[i] = 1.0 / system.g[i];
  SparseMatrix prior_term = ata_weighted(system.a, ginv);
  SparseMatrix data_term = ata_weighted(h, row_weights);
  return add(prior_term, data_term);
}
}  // namespace

Preconditioner Preconditioner::make_posterior(const FemSystem& system,
                                              const ObservationOperator& obs,
                                              std::size_t n_obs) {
  Preconditioner pc;
  pc.kind_ = PreconditionerKind::posterior_mean_theta;
  pc.dim_ = system.dim();
  std::vector<double> w(obs.h.n_rows, static_cast<double>(n_obs) / obs.r_diag);
  pc.m_inv_ = std::make_shared<SparseMatrix>(posterior_precision(system, obs.h, w));
  pc.chol_m_inv_ = std::make_shared<BandedCholesky>(*pc.m_inv_);
  return pc;
}

Preconditioner Preconditioner::make_gauss_newton(const FemSystem& system,
                                                 const SigmoidLikelihood& lik,
                                                 std::span<const double> u_star) {
  Preconditioner pc;
  pc.kind_ = PreconditionerKind::gauss_newton_map;
  pc.dim_ = system.dim();
  const auto& obs = lik.obs();
  const std::vector<double> hu = spmv(obs.h, u_star);
  std::vector<double> w(hu.size());
  for (std::size_t j = 0; j < hu.size(); ++j) {
    const double s = SigmoidLikelihood::sigmoid(hu[j], lik.sat(), lik.gain(), lik.center());
    const double sp = lik.gain() * s * (1.0 - s / lik.sat());
    w[j] = static_cast<double>(lik.n_obs()) * sp * sp / obs.r_diag;
  }
  pc.m_inv_ = std::make_shared<SparseMatrix>(posterior_precision(system, obs.h, w));
  pc.chol_m_inv_ = std::make_shared<BandedCholesky>(*pc.m_inv_);
  return pc;
}

void Preconditioner::apply_m(std::span<const double> v, std::span<double> out) const {
  switch (kind_) {
    case PreconditionerKind::identity:
      std::copy(v.begin(), v.end(), out.begin());
      return;
    case PreconditionerKind::prior_mean_theta: {
      // A^{-1} G A^{-T} v, A symmetric.
      std::vector<double> t = chol_a_->solve(v);
      for (std::size_t i = 0; i < t.size(); ++i) t[i] *= g_[i];
      const std::vector<double> r = chol_a_->solve(t);
      std::copy(r.begin(), r.end(), out.begin());
      return;
    }
    default: {
      const std::vector<double> r = chol_m_inv_->solve(v);
      std::copy(r.begin(), r.end(), out.begin());
      return;
    }
  }
}

void Preconditioner::apply_sqrt(std::span<const double> w, std::span<double> out) const {
  switch (kind_) {
    case PreconditionerKind::identity:
      std::copy(w.begin(), w.end(), out.begin());
      return;
    case PreconditionerKind::prior_mean_theta: {
      // M^{1/2} = A^{-1} G^{1/2}.
      std::vector<double> t(w.size());
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = g_sqrt_[i] * w[i];
      const std::vector<double> r = chol_a_->solve(t);
      std::copy(r.begin(), r.end(), out.begin());
      return;
    }
    default: {
      // M^{1/2} = L^{-T} for M^{-1} = L L^T.
      chol_m_inv_->solve_upper(w, out);
      return;
    }
  }
}

void Preconditioner::apply_m_inverse(std::span<const double> v, std::span<double> out) const {
  switch (kind_) {
    case PreconditionerKind::identity:
      std::copy(v.begin(), v.end(), out.begin());
      return;
    case PreconditionerKind::prior_mean_theta: {
      // M^{-1} = A G^{-1} A via sparse mat-vecs.
      std::vector<double> t = spmv(*a_, v);
      for (std::size_t i = 0; i < t.size(); ++i) t[i] /= g_[i];
      spmv(*a_, t, out);
      return;
    }
    default: {
      std::vector<double> t(v.size());
      chol_m_inv_->mult_upper(v, t);
      chol_m_inv_->mult_lower(t, out);
      return;
    }
  }
}

Preconditioner build_preconditioner(PreconditionerKind kind, const FemSystem& system,
                                    const ObservationOperator* obs, const Likelihood* lik,
                                    std::span<const double> u_star) {
  switch (kind) {
    case PreconditionerKind::identity:
      return Preconditioner::make_identity(system.dim());
    case PreconditionerKind::prior_mean_theta:
      return Preconditioner::make_prior(system);
    case PreconditionerKind::posterior_mean_theta: {
      if (!obs || !lik) throw std::invalid_argument("build_preconditioner: missing observation");
      return Preconditioner::make_posterior(system, *obs, lik->n_obs());
    }
    case PreconditionerKind::gauss_newton_map: {
      const auto* sig = dynamic_cast<const SigmoidLikelihood*>(lik);
      if (!sig || u_star.empty()) {
        throw std::invalid_argument("build_preconditioner: gauss_newton_map needs sigmoid likelihood and u_star");
      }
      return Preconditioner::make_gauss_newton(system, *sig, u_star);
    }
  }
  throw std::invalid_argument("build_preconditioner: unknown kind");
}

}  // namespace statfem
