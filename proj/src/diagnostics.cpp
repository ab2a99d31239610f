#include "statfem/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace statfem {

std::size_t BoundReport::violations() const {
  std::size_t v = 0;
  for (std::size_t i = 0; i < measured.size(); ++i) {
    if (measured[i] > bound[i]) ++v;
  }
  return v;
}

Eigen::MatrixXd to_dense(const SparseMatrix& a) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(a.n_rows),
                                            static_cast<Eigen::Index>(a.n_cols));
  for (std::size_t i = 0; i < a.n_rows; ++i) {
    for (std::size_t p = a.row_offsets[i]; p < a.row_offsets[i + 1]; ++p) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a.col_indices[p])) = a.values[p];
    }
  }
  return m;
}

Eigen::MatrixXd dense_precision(const FemSystem& system) {
  const Eigen::MatrixXd a = to_dense(system.a);
  Eigen::VectorXd ginv(static_cast<Eigen::Index>(system.g.size()));
  for (std::size_t i = 0; i < system.g.size(); ++i) {
    ginv(static_cast<Eigen::Index>(i)) = 1.0 / system.g[i];
  }
  return a.transpose() * ginv.asDiagonal() * a;
}

Eigen::VectorXd dense_precision_rhs(const FemSystem& system) {
  const Eigen::MatrixXd a = to_dense(system.a);
  Eigen::VectorXd t(static_cast<Eigen::Index>(system.b.size()));
  for (std::size_t i = 0; i < system.b.size(); ++i) {
    t(static_cast<Eigen::Index>(i)) = system.b[i] / system.g[i];
  }
  return a.transpose() * t;
}

namespace {

struct CenteredSeries {
  std::vector<double> x;  // centered
  double c0 = 0.0;        // lag-0 autocovariance
};

CenteredSeries center(std::span<const double> series) {
  const std::size_t n = series.size();
  CenteredSeries cs;
  cs.x.resize(n);
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) cs.x[i] = series[i] - mean;
  for (double v : cs.x) cs.c0 += v * v;
  cs.c0 /= static_cast<double>(n);
  if (!(cs.c0 > 0.0)) throw std::invalid_argument("acf: zero-variance series");
  return cs;
}

double autocorr(const CenteredSeries& cs, std::size_t lag) {
  double c = 0.0;
  for (std::size_t i = lag; i < cs.x.size(); ++i) c += cs.x[i] * cs.x[i - lag];
  return c / (static_cast<double>(cs.x.size()) * cs.c0);
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  return lo + 1 < v.size() ? v[lo] * (1.0 - frac) + v[lo + 1] * frac : v[lo];
}

}  // namespace

std::vector<double> acf(std::span<const double> series, std::size_t max_lag) {
  if (series.size() <= max_lag) throw std::invalid_argument("acf: series shorter than max_lag");
  const CenteredSeries cs = center(series);
  std::vector<double> rho(max_lag + 1);
  for (std::size_t l = 0; l <= max_lag; ++l) rho[l] = autocorr(cs, l);
  return rho;
}

double ess(std::span<const double> series) {
  const std::size_t n = series.size();
  if (n < 100) throw std::invalid_argument("ess: need at least 100 samples");
  const CenteredSeries cs = center(series);
  // Geyer: sum lag pairs Gamma_m = rho_{2m} + rho_{2m+1} while positive;
  // tau = -1 + 2 sum Gamma_m (lag-pair sums of a reversible chain are positive).
  double tau = -1.0;
  for (std::size_t m = 0; 2 * m + 1 < n - 1; ++m) {
    const double gamma = autocorr(cs, 2 * m) + autocorr(cs, 2 * m + 1);
    if (gamma <= 0.0) break;
    tau += 2.0 * gamma;
  }
  tau = std::max(tau, 1e-3);  // antithetic chains: allow ESS >> N but keep it finite
  return static_cast<double>(n) / tau;
}

double gaussian_kl(const GaussianMoments& p, const GaussianMoments& q) {
  const Eigen::Index d = p.mean.size();
  if (q.mean.size() != d || p.cov.rows() != d || q.cov.rows() != d) {
    throw std::invalid_argument("gaussian_kl: dimension mismatch");
  }
  const Eigen::LLT<Eigen::MatrixXd> llt_q(q.cov);
  if (llt_q.info() != Eigen::Success) {
    throw std::invalid_argument("gaussian_kl: q covariance is singular");
  }
  const Eigen::LLT<Eigen::MatrixXd> llt_p(p.cov);
  if (llt_p.info() != Eigen::Success) {
    throw std::invalid_argument("gaussian_kl: p covariance is singular");
  }
  const Eigen::VectorXd dmu = p.mean - q.mean;
  const double quad = dmu.dot(llt_q.solve(dmu));
  const double trace = llt_q.solve(p.cov).trace();
  double logdet_q = 0.0, logdet_p = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    logdet_q += 2.0 * std::log(llt_q.matrixLLT()(i, i));
    logdet_p += 2.0 * std::log(llt_p.matrixLLT()(i, i));
  }
  return 0.5 * (trace + quad - static_cast<double>(d) + logdet_q - logdet_p);
}

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& s) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
  if (eig.info() != Eigen::Success) throw std::runtime_error("psd_sqrt: eigendecomposition failed");
  Eigen::VectorXd lam = eig.eigenvalues();
  for (Eigen::Index i = 0; i < lam.size(); ++i) lam(i) = std::sqrt(std::max(lam(i), 0.0));
  return eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

double gaussian_w2(const GaussianMoments& p, const GaussianMoments& q) {
  const Eigen::Index d = p.mean.size();
  if (q.mean.size() != d || p.cov.rows() != d || q.cov.rows() != d) {
    throw std::invalid_argument("gaussian_w2: dimension mismatch");
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> check_p(p.cov), check_q(q.cov);
  const double tol_p = -1e-10 * std::max(1.0, check_p.eigenvalues().cwiseAbs().maxCoeff());
  const double tol_q = -1e-10 * std::max(1.0, check_q.eigenvalues().cwiseAbs().maxCoeff());
  if (check_p.eigenvalues().minCoeff() < tol_p || check_q.eigenvalues().minCoeff() < tol_q) {
    throw std::invalid_argument("gaussian_w2: covariance not positive semidefinite");
  }
  const Eigen::MatrixXd sq = psd_sqrt(q.cov);
  const Eigen::MatrixXd inner = sq * p.cov * sq;
  const Eigen::MatrixXd cross = psd_sqrt(0.5 * (inner + inner.transpose()));
  const double w2sq = (p.mean - q.mean).squaredNorm() + p.cov.trace() + q.cov.trace() -
                      2.0 * cross.trace();
  return std::sqrt(std::max(w2sq, 0.0));
}

namespace {

// One-step affine map of the Gaussian moments; composed by binary
// exponentiation so k up to 1e7 stays cheap.
struct AffineMap {
  Eigen::MatrixXd b;
  Eigen::VectorXd c;
  Eigen::MatrixXd noise;  // covariance injected per application

  static AffineMap identity(Eigen::Index d) {
    return {Eigen::MatrixXd::Identity(d, d), Eigen::VectorXd::Zero(d),
            Eigen::MatrixXd::Zero(d, d)};
  }
  // first `a`, then `b2`
  static AffineMap compose(const AffineMap& b2, const AffineMap& a) {
    return {b2.b * a.b, b2.b * a.c + b2.c, b2.b * a.noise * b2.b.transpose() + b2.noise};
  }
};

}  // namespace

GaussianMoments ula_moment_oracle(const Eigen::MatrixXd& precision, const Eigen::VectorXd& pb,
                                  const Eigen::MatrixXd& m_precond, double eta,
                                  const GaussianMoments& init, std::size_t k) {
  const Eigen::Index d = precision.rows();
  if (d > 200) throw std::invalid_argument("ula_moment_oracle: dense guard (d <= 200)");
  if (precision.cols() != d || m_precond.rows() != d || pb.size() != d ||
      init.mean.size() != d || init.cov.rows() != d) {
    throw std::invalid_argument("ula_moment_oracle: dimension mismatch");
  }
  if (!(eta > 0.0)) throw std::invalid_argument("ula_moment_oracle: eta must be > 0");

  AffineMap step{Eigen::MatrixXd::Identity(d, d) - eta * m_precond * precision,
                 eta * (m_precond * pb), 2.0 * eta * m_precond};
  AffineMap acc = AffineMap::identity(d);
  std::size_t rem = k;
  while (rem > 0) {
    if (rem & 1) acc = AffineMap::compose(step, acc);
    rem >>= 1;
    if (rem > 0) step = AffineMap::compose(step, step);
  }

  GaussianMoments out;
  out.mean = acc.b * init.mean + acc.c;
  Eigen::MatrixXd cov = acc.b * init.cov * acc.b.transpose() + acc.noise;
  out.cov = 0.5 * (cov + cov.transpose());
  return out;
}

namespace {

struct SpectrumConstants {
  double m = 0.0, l = 0.0, kappa = 0.0;
  GaussianMoments target;
};

SpectrumConstants target_constants(const Eigen::MatrixXd& precision, const Eigen::VectorXd& pb) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(precision);
  if (eig.info() != Eigen::Success) {
    throw std::runtime_error("verify bound: eigendecomposition failed");
  }
  SpectrumConstants c;
  c.m = eig.eigenvalues().minCoeff();
  c.l = eig.eigenvalues().maxCoeff();
  if (!(c.m > 0.0)) throw std::invalid_argument("verify bound: precision not positive definite");
  c.kappa = c.l / c.m;
  const Eigen::LLT<Eigen::MatrixXd> llt(precision);
  c.target.mean = llt.solve(pb);
  c.target.cov = llt.solve(Eigen::MatrixXd::Identity(precision.rows(), precision.rows()));
  c.target.cov = 0.5 * (c.target.cov + c.target.cov.transpose());
  return c;
}

}  // namespace

BoundReport verify_kl_bound(const Eigen::MatrixXd& precision, const Eigen::VectorXd& pb,
                            double eta, std::span<const std::size_t> k_grid,
                            const GaussianMoments& p0) {
  const SpectrumConstants c = target_constants(precision, pb);
  if (eta > c.m / (4.0 * c.l * c.l)) {
    throw std::invalid_argument("verify_kl_bound: eta exceeds m/(4 L^2)");
  }
  const double d = static_cast<double>(precision.rows());
  const double kl0 = gaussian_kl(p0, c.target);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(precision.rows(), precision.rows());

  BoundReport rep;
  rep.k_grid.assign(k_grid.begin(), k_grid.end());
  rep.m_theta = c.m;
  rep.l_theta = c.l;
  rep.kappa = c.kappa;
  rep.eta = eta;
  rep.dim = static_cast<std::size_t>(precision.rows());
  for (std::size_t k : k_grid) {
    const GaussianMoments pk = ula_moment_oracle(precision, pb, eye, eta, p0, k);
    rep.measured.push_back(gaussian_kl(pk, c.target));
    rep.bound.push_back(std::exp(-c.m * eta * static_cast<double>(k)) * kl0 +
                        8.0 * eta * d * c.l * c.kappa);
  }
  return rep;
}

BoundReport verify_w2_bound(const Eigen::MatrixXd& precision, const Eigen::VectorXd& pb,
                            double eta, std::span<const std::size_t> k_grid,
                            const GaussianMoments& p0) {
  const SpectrumConstants c = target_constants(precision, pb);
  if (eta > 2.0 / (c.m + c.l)) {
    throw std::invalid_argument("verify_w2_bound: eta exceeds 2/(m + L)");
  }
  const double d = static_cast<double>(precision.rows());
  const double w20 = gaussian_w2(p0, c.target);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(precision.rows(), precision.rows());

  BoundReport rep;
  rep.k_grid.assign(k_grid.begin(), k_grid.end());
  rep.m_theta = c.m;
  rep.l_theta = c.l;
  rep.kappa = c.kappa;
  rep.eta = eta;
  rep.dim = static_cast<std::size_t>(precision.rows());
  for (std::size_t k : k_grid) {
    const GaussianMoments pk = ula_moment_oracle(precision, pb, eye, eta, p0, k);
    rep.measured.push_back(gaussian_w2(pk, c.target));
    const double decay = std::pow(1.0 - c.m * eta, 2.0 * static_cast<double>(k));
    rep.bound.push_back(std::sqrt(2.0 * decay * w20 * w20 +
                                  (49.0 / 9.0) * c.kappa * c.kappa * eta * d));
  }
  return rep;
}

std::vector<ConditionRow> condition_study(std::span<const std::size_t> mesh_levels,
                                          const GpSpec& gp, std::size_t n_theta_samples,
                                          std::uint64_t seed, double f_const, double beta_xi) {
  if (n_theta_samples < 20) {
    throw std::invalid_argument("condition_study: need at least 20 theta samples");
  }
  std::vector<ConditionRow> rows;
  for (std::size_t level_idx = 0; level_idx < mesh_levels.size(); ++level_idx) {
    const std::size_t n = mesh_levels[level_idx];
    const Mesh mesh = build_mesh(n);
    std::vector<double> coords(mesh.nodes_per_side());
    for (std::size_t i = 0; i < coords.size(); ++i) {
      coords[i] = static_cast<double>(i) / static_cast<double>(n);
    }
    const KroneckerFactor factor = build_kron_factor(coords, gp);
    const std::vector<double> theta_bar = mean_theta_field(coords, gp);
    const FemSystem sys_bar = assemble(mesh, theta_bar, f_const, beta_xi);
    const BandedCholesky chol_bar(sys_bar.a);
    const std::size_t d = sys_bar.dim();
    std::vector<double> g_sqrt(d), g_inv_sqrt(d);
    for (std::size_t i = 0; i < d; ++i) {
      g_sqrt[i] = std::sqrt(sys_bar.g[i]);
      g_inv_sqrt[i] = 1.0 / g_sqrt[i];
    }

    std::vector<double> kappas, kappas_m;
    RngStream level_rng = RngStream::derive(seed, level_idx);
    for (std::size_t s = 0; s < n_theta_samples; ++s) {
      RngStream draw_rng = level_rng.substream(s);
      const ThetaField theta = sample_theta(factor, gp, draw_rng);
      const FemSystem sys = assemble(mesh, theta.values, f_const, beta_xi);
      const BandedCholesky chol(sys.a);

      auto apply_p = [&](std::span<const double> v, std::span<double> out) {
        const std::vector<double> av = spmv(sys.a, v);
        std::vector<double> t(d);
        for (std::size_t i = 0; i < d; ++i) t[i] = av[i] / sys.g[i];
        spmv(sys.a, t, out);
      };
      auto apply_p_inv = [&](std::span<const double> v, std::span<double> out) {
        std::vector<double> t = chol.solve(v);
        for (std::size_t i = 0; i < d; ++i) t[i] *= sys.g[i];
        const std::vector<double> r = chol.solve(t);
        std::copy(r.begin(), r.end(), out.begin());
      };
      kappas.push_back(extreme_eigs(apply_p, d, 1e-3, apply_p_inv).condition_number());

      // S^T P S with S = Abar^{-1} G^{1/2} (mean-theta preconditioner sqrt).
      std::vector<double> buf(d);
      auto apply_pm = [&](std::span<const double> v, std::span<double> out) {
        std::vector<double> w(d);
        for (std::size_t i = 0; i < d; ++i) w[i] = g_sqrt[i] * v[i];
        w = chol_bar.solve(w);
        apply_p(w, buf);
        const std::vector<double> y = chol_bar.solve(buf);
        for (std::size_t i = 0; i < d; ++i) out[i] = g_sqrt[i] * y[i];
      };
      auto apply_pm_inv = [&](std::span<const double> v, std::span<double> out) {
        std::vector<double> w(d);
        for (std::size_t i = 0; i < d; ++i) w[i] = g_inv_sqrt[i] * v[i];
        const std::vector<double> aw = spmv(sys_bar.a, w);
        apply_p_inv(aw, buf);
        const std::vector<double> y = spmv(sys_bar.a, buf);
        for (std::size_t i = 0; i < d; ++i) out[i] = g_inv_sqrt[i] * y[i];
      };
      kappas_m.push_back(extreme_eigs(apply_pm, d, 1e-3, apply_pm_inv).condition_number());
    }

    ConditionRow row;
    row.mesh_n = n;
    row.e_kappa = 0.0;
    row.e_kappa_precond = 0.0;
    for (double k : kappas) row.e_kappa += k;
    for (double k : kappas_m) row.e_kappa_precond += k;
    row.e_kappa /= static_cast<double>(kappas.size());
    row.e_kappa_precond /= static_cast<double>(kappas_m.size());
    row.kappa_q25 = quantile(kappas, 0.25);
    row.kappa_q75 = quantile(kappas, 0.75);
    row.kappa_precond_q25 = quantile(kappas_m, 0.25);
    row.kappa_precond_q75 = quantile(kappas_m, 0.75);
    rows.push_back(row);
  }
  return rows;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> sample_moments(std::span<const double> samples,
                                                           std::size_t dim) {
  if (dim == 0 || samples.empty() || samples.size() % dim != 0) {
    throw std::invalid_argument("sample_moments: bad sample block");
  }
  const std::size_t k = samples.size() / dim;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  Eigen::VectorXd var = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  for (std::size_t s = 0; s < k; ++s) {
    for (std::size_t j = 0; j < dim; ++j) {
      mean(static_cast<Eigen::Index>(j)) += samples[s * dim + j];
    }
  }
  mean /= static_cast<double>(k);
  for (std::size_t s = 0; s < k; ++s) {
    for (std::size_t j = 0; j < dim; ++j) {
      const double c = samples[s * dim + j] - mean(static_cast<Eigen::Index>(j));
      var(static_cast<Eigen::Index>(j)) += c * c;
    }
  }
  var /= static_cast<double>(k > 1 ? k - 1 : 1);
  return {mean, var};
}

std::pair<double, double> summary_errors(const ChainRecord& chain, const ChainRecord& reference) {
  if (chain.n_samples() == 0 || reference.n_samples() == 0) {
    throw std::invalid_argument("summary_errors: empty sample set");
  }
  if (chain.dim != reference.dim) throw std::invalid_argument("summary_errors: dimension mismatch");
  const auto [mc, vc] = sample_moments(chain.samples, chain.dim);
  const auto [mr, vr] = sample_moments(reference.samples, reference.dim);
  const double mn = mr.norm();
  const double vn = vr.norm();
  if (!(mn > 0.0) || !(vn > 0.0)) {
    throw std::invalid_argument("summary_errors: zero reference norm");
  }
  return {(mc - mr).norm() / mn, (vc - vr).norm() / vn};
}

}  // namespace statfem
