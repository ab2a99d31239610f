#include "statfem/samplers.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

namespace statfem {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

void ula_step(std::vector<double>& u,
              const std::function<std::vector<double>(std::span<const double>)>& grad,
              const Preconditioner& precond, double eta, RngStream& rng, double noise_scale) {
  if (!(eta > 0.0)) throw std::invalid_argument("ula_step: eta must be > 0");
  const std::size_t d = u.size();
  const std::vector<double> g = grad(u);
  std::vector<double> mg(d), z(d), mz(d);
  precond.apply_m(g, mg);
  for (auto& x : z) x = rng.normal();
  precond.apply_sqrt(z, mz);
  const double noise = noise_scale * std::sqrt(2.0 * eta);
  for (std::size_t i = 0; i < d; ++i) u[i] += -eta * mg[i] + noise * mz[i];
  if (!all_finite(u)) {
    throw std::runtime_error("ula_step: non-finite state (chain diverged)");
  }
}

double mala_log_accept(std::span<const double> u_from, std::span<const double> u_to,
                       double phi_from, double phi_to,
                       const std::function<std::vector<double>(std::span<const double>)>& grad,
                       const Preconditioner& precond, double eta) {
  const std::size_t d = u_from.size();
  auto log_q = [&](std::span<const double> from, std::span<const double> to) {
    const std::vector<double> g = grad(from);
    std::vector<double> mg(d), diff(d), minv_diff(d);
    precond.apply_m(g, mg);
    for (std::size_t i = 0; i < d; ++i) diff[i] = to[i] - (from[i] - eta * mg[i]);
    precond.apply_m_inverse(diff, minv_diff);
    return -dot(diff, minv_diff) / (4.0 * eta);
  };
  return (phi_from - phi_to) + log_q(u_to, u_from) - log_q(u_from, u_to);
}

bool mala_step(std::vector<double>& u, double& phi_u,
               const std::function<double(std::span<const double>)>& phi,
               const std::function<std::vector<double>(std::span<const double>)>& grad,
               const Preconditioner& precond, double eta, RngStream& rng) {
  const std::size_t d = u.size();
  const std::vector<double> g = grad(u);
  std::vector<double> mg(d), z(d), mz(d), proposal(d);
  precond.apply_m(g, mg);
  for (auto& x : z) x = rng.normal();
  precond.apply_sqrt(z, mz);
  const double noise = std::sqrt(2.0 * eta);
  for (std::size_t i = 0; i < d; ++i) proposal[i] = u[i] - eta * mg[i] + noise * mz[i];
  if (!all_finite(proposal)) return false;  // treat a non-finite proposal as rejected
  const double phi_prop = phi(proposal);
  const double log_alpha = mala_log_accept(u, proposal, phi_u, phi_prop, grad, precond, eta);
  if (std::log(rng.uniform()) < log_alpha) {
    u = std::move(proposal);
    phi_u = phi_prop;
    return true;
  }
  return false;
}

ConditionalGaussian::ConditionalGaussian(const FemSystem& system)
    : system_(&system), chol_a_(system.a) {
  mean_ = chol_a_.solve(system.b);
  g_sqrt_.resize(system.g.size());
  for (std::size_t i = 0; i < g_sqrt_.size(); ++i) g_sqrt_[i] = std::sqrt(system.g[i]);
}

std::vector<double> ConditionalGaussian::sample(RngStream& rng) const {
  std::vector<double> rhs(mean_.size());
  for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = system_->b[i] + g_sqrt_[i] * rng.normal();
  return chol_a_.solve(rhs);
}

std::vector<double> exact_prior_conditional_sample(const ConditionalGaussian& prior,
                                                   RngStream& rng) {
  return prior.sample(rng);
}

bool pcn_step(std::vector<double>& u, double& lik_phi_u, const ConditionalGaussian& prior,
              const Likelihood* lik, double beta, RngStream& rng) {
  if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("pcn_step: beta must be in (0,1]");
  const std::size_t d = u.size();
  const auto& m = prior.mean();
  std::vector<double> centered = prior.sample(rng);
  for (std::size_t i = 0; i < d; ++i) centered[i] -= m[i];
  const double keep = std::sqrt(1.0 - beta * beta);
  std::vector<double> proposal(d);
  for (std::size_t i = 0; i < d; ++i) {
    proposal[i] = m[i] + keep * (u[i] - m[i]) + beta * centered[i];
  }
  double phi_prop = 0.0;
  double log_alpha = 0.0;
  if (lik) {
    phi_prop = lik->phi(proposal);
    log_alpha = lik_phi_u - phi_prop;
  }
  if (log_alpha >= 0.0 || std::log(rng.uniform()) < log_alpha) {
    u = std::move(proposal);
    lik_phi_u = phi_prop;
    return true;
  }
  return false;
}

ConditionalPosteriorGaussian::ConditionalPosteriorGaussian(const FemSystem& system,
                                                           const ObservationOperator& obs,
                                                           const Eigen::MatrixXd& data)
    : chol_c_inv_([&] {
        std::vector<double> ginv(system.g.size());
        for (std::size_t i = 0; i < ginv.size(); ++i) ginv[i] = 1.0 / system.g[i];
        const std::size_t n_obs = static_cast<std::size_t>(data.cols());
        std::vector<double> w(obs.h.n_rows, static_cast<double>(n_obs) / obs.r_diag);
        return add(ata_weighted(system.a, ginv), ata_weighted(obs.h, w));
      }()) {
  // rhs = A^T G^{-1} b + H^T R^{-1} sum_i y_i
  std::vector<double> t(system.b.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = system.b[i] / system.g[i];
  std::vector<double> rhs = spmv(system.a, t);
  std::vector<double> sum_y(obs.h.n_rows, 0.0);
  for (Eigen::Index c = 0; c < data.cols(); ++c) {
    for (Eigen::Index r = 0; r < data.rows(); ++r) {
      sum_y[static_cast<std::size_t>(r)] += data(r, c);
    }
  }
  for (double& x : sum_y) x /= obs.r_diag;
  const std::vector<double> ht = spmv_transpose(obs.h, sum_y);
  for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] += ht[i];
  mean_ = chol_c_inv_.solve(rhs);
}

std::vector<double> ConditionalPosteriorGaussian::sample(RngStream& rng) const {
  std::vector<double> z(mean_.size()), x(mean_.size());
  for (auto& v : z) v = rng.normal();
  chol_c_inv_.solve_upper(z, x);  // L^{-T} z has covariance (L L^T)^{-1} = C
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += mean_[i];
  return x;
}

std::vector<double> exact_posterior_conditional_sample(const FemSystem& system,
                                                       const ObservationOperator& obs,
                                                       const Eigen::MatrixXd& data,
                                                       RngStream& rng) {
  return ConditionalPosteriorGaussian(system, obs, data).sample(rng);
}

double adapt_stepsize(double accept_rate, double eta, double target) {
  return eta * std::exp(0.1 * (accept_rate - target));
}

FemSystem Model::assemble_for(const ThetaField& theta) const {
  return assemble(*mesh, theta.values, f_const, beta_xi);
}

double auto_ula_stepsize(const Model& model, const Preconditioner& precond,
                         std::span<const double> u0, RngStream rng) {
  // m/(4 L^2) at the mean-theta system, then halve until 100 steps stay finite.
  std::vector<double> theta_bar = mean_theta_field(model.gp_factor->coords, *model.gp_spec);
  const FemSystem sys = assemble(*model.mesh, theta_bar, model.f_const, model.beta_xi);
  const PriorPotential prior{&sys};
  const std::size_t d = sys.dim();

  auto precision_apply = [&](std::span<const double> v, std::span<double> out) {
    prior.hessian_apply(v, out);
    if (model.likelihood) model.likelihood->add_gn_hessian_apply(u0, v, out);
  };
  // Inverse action via the banded factor (prior term only dominates the
  // small end of the spectrum; used only as an eigenvalue probe).
  BandedCholesky chol_a(sys.a);
  auto precision_inv_apply = [&](std::span<const double> v, std::span<double> out) {
    std::vector<double> t = chol_a.solve(v);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] *= sys.g[i];
    const std::vector<double> r = chol_a.solve(t);
    std::copy(r.begin(), r.end(), out.begin());
  };
  const EigEstimate est = extreme_eigs(precision_apply, d, 1e-3, precision_inv_apply);
  double eta = est.lambda_min / (4.0 * est.lambda_max * est.lambda_max);

  auto grad = [&](std::span<const double> u) { return grad_phi_posterior(prior, model.likelihood, u); };
  for (int attempt = 0; attempt < 60; ++attempt) {
    std::vector<double> u(u0.begin(), u0.end());
    RngStream trial = rng.substream(static_cast<std::uint64_t>(attempt));
    bool ok = true;
    try {
      for (int step = 0; step < 100; ++step) ula_step(u, grad, precond, eta, trial);
    } catch (const std::runtime_error&) {
      ok = false;
    }
    if (ok) return eta;
    eta *= 0.5;
  }
  throw std::runtime_error("auto_ula_stepsize: no stable stepsize found");
}

ChainRecord run_algorithm1(const Model& model, const Preconditioner& precond,
                           const SamplerConfig& cfg, std::size_t n_samples,
                           std::span<const double> u0, RngStream rng) {
  if (n_samples == 0) throw std::invalid_argument("run_algorithm1: need at least one sample");
  if (cfg.n_inner == 0) throw std::invalid_argument("run_algorithm1: n_inner must be >= 1");
  const auto t_start = std::chrono::steady_clock::now();

  const std::size_t d = u0.size();
  ChainRecord rec;
  rec.dim = d;
  rec.samples.reserve(n_samples * d);
  rec.theta_keys.reserve(n_samples);

  RngStream theta_rng = rng.substream(stream_id::kTheta);
  RngStream noise_rng = rng.substream(stream_id::kNoise);

  double eta = cfg.eta;
  if (eta <= 0.0) {
    if (cfg.kind == SamplerKind::pula || cfg.kind == SamplerKind::pmala) {
      eta = std::pow(static_cast<double>(d), -1.0 / 3.0);
    } else if (cfg.kind == SamplerKind::ula || cfg.kind == SamplerKind::mala) {
      eta = auto_ula_stepsize(model, precond, u0, rng.substream(stream_id::kInit));
    }
  }
  double beta = cfg.pcn_beta;

  std::vector<double> u(u0.begin(), u0.end());
  std::size_t accepts_total = 0, decisions_total = 0;
  std::size_t accepts_batch = 0, decisions_batch = 0;
  const bool is_mala = cfg.kind == SamplerKind::mala || cfg.kind == SamplerKind::pmala;

  const std::size_t total_outer = cfg.n_warmup + n_samples;
  for (std::size_t k = 0; k < total_outer; ++k) {
    const bool warm = k < cfg.n_warmup;
    RngStream theta_stream = theta_rng.substream(k);
    const std::uint64_t theta_key = theta_stream.key();
    const ThetaField theta = sample_theta(*model.gp_factor, *model.gp_spec, theta_stream);
    FemSystem sys;
    try {
      sys = model.assemble_for(theta);
    } catch (const std::exception& e) {
      throw std::runtime_error("run_algorithm1: outer step " + std::to_string(k) + ": " + e.what());
    }
    const PriorPotential prior{&sys};
    auto grad = [&](std::span<const double> v) {
      return grad_phi_posterior(prior, model.likelihood, v);
    };
    auto phi = [&](std::span<const double> v) {
      return model.likelihood ? phi_posterior(prior, *model.likelihood, v) : prior.phi(v);
    };

    try {
      switch (cfg.kind) {
        case SamplerKind::ula:
        case SamplerKind::pula: {
          for (std::size_t i = 0; i < cfg.n_inner; ++i) ula_step(u, grad, precond, eta, noise_rng);
          break;
        }
        case SamplerKind::mala:
        case SamplerKind::pmala: {
          double phi_u = phi(u);
          for (std::size_t i = 0; i < cfg.n_inner; ++i) {
            const bool acc = mala_step(u, phi_u, phi, grad, precond, eta, noise_rng);
            accepts_batch += acc ? 1 : 0;
            decisions_batch += 1;
            if (!warm) {
              accepts_total += acc ? 1 : 0;
              decisions_total += 1;
            }
          }
          break;
        }
        case SamplerKind::pcn: {
          const ConditionalGaussian cond(sys);
          double lik_phi_u = model.likelihood ? model.likelihood->phi(u) : 0.0;
          for (std::size_t i = 0; i < cfg.n_inner; ++i) {
            const bool acc = pcn_step(u, lik_phi_u, cond, model.likelihood, beta, noise_rng);
            accepts_batch += acc ? 1 : 0;
            decisions_batch += 1;
            if (!warm) {
              accepts_total += acc ? 1 : 0;
              decisions_total += 1;
            }
          }
          break;
        }
        case SamplerKind::exact: {
          if (!model.likelihood) {
            u = ConditionalGaussian(sys).sample(noise_rng);
          } else {
            const auto* lin = dynamic_cast<const LinearLikelihood*>(model.likelihood);
            if (!lin) {
              throw std::runtime_error("exact sampler requires a linear likelihood");
            }
            u = ConditionalPosteriorGaussian(sys, lin->obs(), lin->data()).sample(noise_rng);
          }
          break;
        }
      }
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("run_algorithm1: divergence at outer step " + std::to_string(k) +
                               ": " + e.what());
    }

    // Warmup stepsize adaptation in batches; frozen afterwards.
    if (warm && decisions_batch >= cfg.adapt_batch) {
      const double rate = static_cast<double>(accepts_batch) / static_cast<double>(decisions_batch);
      if (is_mala) {
        eta = adapt_stepsize(rate, eta, cfg.target_accept);
        rec.eta_trace.push_back(eta);
      } else if (cfg.kind == SamplerKind::pcn) {
        beta = std::min(1.0, adapt_stepsize(rate, beta, cfg.target_accept));
        rec.eta_trace.push_back(beta);
      }
      accepts_batch = 0;
      decisions_batch = 0;
    }

    if (!warm) {
      rec.samples.insert(rec.samples.end(), u.begin(), u.end());
      rec.theta_keys.push_back(theta_key);
    }
  }

  rec.accept_rate =
      decisions_total > 0 ? static_cast<double>(accepts_total) / static_cast<double>(decisions_total)
                          : (is_mala || cfg.kind == SamplerKind::pcn ? 0.0 : 1.0);
  rec.eta_final = cfg.kind == SamplerKind::pcn ? beta : eta;
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return rec;
}

Eigen::MatrixXd generate_data(const Model& model, const ObservationOperator& obs,
                              std::size_t n_obs, double scale, bool nonlinear, RngStream& rng,
                              double sigmoid_sat, double sigmoid_gain, double sigmoid_center) {
  if (n_obs == 0) throw std::invalid_argument("generate_data: n_obs must be >= 1");
  const double sigma_e = std::sqrt(obs.r_diag);
  Eigen::MatrixXd data(static_cast<Eigen::Index>(obs.h.n_rows), static_cast<Eigen::Index>(n_obs));
  RngStream theta_rng = rng.substream(stream_id::kTheta);
  RngStream noise_rng = rng.substream(stream_id::kNoise);
  for (std::size_t i = 0; i < n_obs; ++i) {
    RngStream theta_stream = theta_rng.substream(i);
    const ThetaField theta = sample_theta(*model.gp_factor, *model.gp_spec, theta_stream);
    const FemSystem sys = model.assemble_for(theta);
    std::vector<double> u = ConditionalGaussian(sys).sample(noise_rng);
    for (double& x : u) x *= scale;
    const std::vector<double> hu = spmv(obs.h, u);
    for (std::size_t j = 0; j < hu.size(); ++j) {
      const double clean = nonlinear
                               ? SigmoidLikelihood::sigmoid(hu[j], sigmoid_sat, sigmoid_gain,
                                                            sigmoid_center)
                               : hu[j];
      data(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) =
          clean + sigma_e * noise_rng.normal();
    }
  }
  return data;
}

}  // namespace statfem
