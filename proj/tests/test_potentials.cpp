#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "statfem/diagnostics.hpp"
#include "statfem/fem.hpp"
#include "statfem/potentials.hpp"
#include "statfem/rng.hpp"
#include "statfem/samplers.hpp"

using namespace statfem;

namespace {

FemSystem small_system(std::size_t n, double theta_c = 1.0) {
  const Mesh mesh = build_mesh(n);
  const std::vector<double> theta(mesh.n_nodes(), theta_c);
  return assemble(mesh, theta, 1.0, 0.05);
}

FemSystem scalar_system(double a, double g, double b) {
  FemSystem sys;
  sys.a = SparseMatrix::from_triplets(1, 1, {0}, {0}, {a}, true);
  sys.b = {b};
  sys.g = {g};
  sys.mass_lumped = {g};
  return sys;
}

ObservationOperator small_obs(const Mesh& mesh, std::size_t d_y, double sigma_e,
                              std::uint64_t seed) {
  RngStream rng = RngStream::derive(seed, stream_id::kObsPoints);
  std::vector<std::pair<double, double>> pts(d_y);
  for (auto& [x, y] : pts) {
    x = 0.05 + 0.9 * rng.uniform();
    y = 0.05 + 0.9 * rng.uniform();
  }
  return build_observation(mesh, pts, sigma_e);
}

double fd_gradient(const std::function<double(std::span<const double>)>& f,
                   std::vector<double> u, std::size_t i) {
  const double h = 1e-6 * (1.0 + std::abs(u[i]));
  const double u0 = u[i];
  u[i] = u0 + h;
  const double fp = f(u);
  u[i] = u0 - h;
  const double fm = f(u);
  return (fp - fm) / (2.0 * h);
}

}  // namespace

TEST_CASE("prior gradient vanishes at the deterministic solution") {
  const FemSystem sys = small_system(4);
  const PriorPotential p{&sys};
  const std::vector<double> u = cg_solve(sys.a, sys.b, 1e-12, 1000).x;
  const std::vector<double> g = p.grad(u);
  double gn = 0.0, bn = 0.0;
  for (double v : g) gn += v * v;
  for (double v : sys.b) bn += v * v;
  CHECK(std::sqrt(gn) < 1e-8 * std::sqrt(bn));
}

TEST_CASE("scalar prior gradient by hand") {
  const FemSystem sys = scalar_system(2.0, 1.0, 0.0);
  const PriorPotential p{&sys};
  CHECK(p.grad(std::vector<double>{1.0})[0] == doctest::Approx(4.0));
}

TEST_CASE("prior gradient matches finite differences") {
  const FemSystem sys = small_system(4);
  const PriorPotential p{&sys};
  auto phi = [&](std::span<const double> u) { return p.phi(u); };
  RngStream rng = RngStream::derive(41, 0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> u(sys.dim());
    for (double& v : u) v = rng.normal();
    const std::vector<double> g = p.grad(u);
    for (std::size_t i : {0ul, 7ul, 12ul, 18ul, 24ul}) {
      CHECK(g[i] == doctest::Approx(fd_gradient(phi, u, i)).epsilon(1e-6));
    }
  }
}

TEST_CASE("phi is a nonnegative quadratic with its minimum at Au=b") {
  const FemSystem sys = small_system(3);
  const PriorPotential p{&sys};
  RngStream rng = RngStream::derive(42, 0);
  std::vector<double> u(sys.dim());
  for (double& v : u) v = rng.normal();
  CHECK(p.phi(u) >= 0.0);
  const std::vector<double> ustar = cg_solve(sys.a, sys.b, 1e-13, 1000).x;
  CHECK(p.phi(ustar) < 1e-16);
}

TEST_CASE("posterior gradient with no observations reduces to the prior") {
  const FemSystem sys = small_system(4);
  const Mesh mesh = build_mesh(4);
  const PriorPotential p{&sys};
  const ObservationOperator obs = small_obs(mesh, 8, 0.01, 1);
  const LinearLikelihood lik(obs, Eigen::MatrixXd(8, 0));
  RngStream rng = RngStream::derive(43, 0);
  std::vector<double> u(sys.dim());
  for (double& v : u) v = rng.normal();
  const std::vector<double> g_prior = p.grad(u);
  const std::vector<double> g_post = grad_phi_posterior(p, &lik, u);
  for (std::size_t i = 0; i < u.size(); ++i) CHECK(g_post[i] == doctest::Approx(g_prior[i]));
}

TEST_CASE("linear posterior gradient vanishes at the conditional posterior mean") {
  const Mesh mesh = build_mesh(4);
  const FemSystem sys = small_system(4);
  const ObservationOperator obs = small_obs(mesh, 16, 0.01, 2);
  RngStream rng = RngStream::derive(44, 0);
  Eigen::MatrixXd data(16, 5);
  for (Eigen::Index c = 0; c < 5; ++c) {
    for (Eigen::Index r = 0; r < 16; ++r) data(r, c) = 0.05 * rng.normal();
  }
  const LinearLikelihood lik(obs, data);
  const PriorPotential p{&sys};
  const ConditionalPosteriorGaussian post(sys, obs, data);
  const std::vector<double> g = grad_phi_posterior(p, &lik, post.mean());
  double gn = 0.0;
  for (double v : g) gn += v * v;
  CHECK(std::sqrt(gn) < 1e-8);
}

TEST_CASE("sigmoid sensor hits its anchor points") {
  CHECK(SigmoidLikelihood::sigmoid(0.05, 0.1, 100.0, 0.05) == doctest::Approx(0.05));
  CHECK(SigmoidLikelihood::sigmoid(1.0, 0.1, 100.0, 0.05) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(SigmoidLikelihood::sigmoid(-1.0, 0.1, 100.0, 0.05) < 1e-12);
}

TEST_CASE("sigmoid posterior gradient matches finite differences") {
  const Mesh mesh = build_mesh(4);
  const FemSystem sys = small_system(4);
  const ObservationOperator obs = small_obs(mesh, 8, 0.01, 3);
  RngStream rng = RngStream::derive(45, 0);
  Eigen::MatrixXd data(8, 3);
  for (Eigen::Index c = 0; c < 3; ++c) {
    for (Eigen::Index r = 0; r < 8; ++r) data(r, c) = 0.05 + 0.01 * rng.normal();
  }
  const SigmoidLikelihood lik(obs, data);
  const PriorPotential p{&sys};
  auto phi = [&](std::span<const double> u) { return phi_posterior(p, lik, u); };
  std::vector<double> u(sys.dim());
  for (double& v : u) v = 0.1 * rng.normal();
  const std::vector<double> g = grad_phi_posterior(p, &lik, u);
  for (std::size_t i : {0ul, 6ul, 12ul, 17ul, 24ul}) {
    CHECK(g[i] == doctest::Approx(fd_gradient(phi, u, i)).epsilon(1e-5));
  }
}

TEST_CASE("linear posterior Hessian action matches gradient differences") {
  const Mesh mesh = build_mesh(3);
  const FemSystem sys = small_system(3);
  const ObservationOperator obs = small_obs(mesh, 6, 0.01, 4);
  RngStream rng = RngStream::derive(46, 0);
  Eigen::MatrixXd data(6, 4);
  for (Eigen::Index c = 0; c < 4; ++c) {
    for (Eigen::Index r = 0; r < 6; ++r) data(r, c) = 0.05 * rng.normal();
  }
  const LinearLikelihood lik(obs, data);
  const PriorPotential p{&sys};
  std::vector<double> u(sys.dim(), 0.0), v(sys.dim());
  for (double& x : v) x = rng.normal();

  std::vector<double> hv(sys.dim());
  p.hessian_apply(v, hv);
  lik.add_gn_hessian_apply(u, v, hv);

  const double h = 1e-6;
  std::vector<double> up(u), um(u);
  for (std::size_t i = 0; i < u.size(); ++i) {
    up[i] += h * v[i];
    um[i] -= h * v[i];
  }
  const std::vector<double> gp = grad_phi_posterior(p, &lik, up);
  const std::vector<double> gm = grad_phi_posterior(p, &lik, um);
  for (std::size_t i = 0; i < u.size(); ++i) {
    CHECK(hv[i] == doctest::Approx((gp[i] - gm[i]) / (2.0 * h)).epsilon(1e-5));
  }
}

TEST_CASE("map_estimate solves the linear posterior in one step") {
  const Mesh mesh = build_mesh(4);
  const FemSystem sys = small_system(4);
  const ObservationOperator obs = small_obs(mesh, 16, 0.01, 5);
  RngStream rng = RngStream::derive(47, 0);
  Eigen::MatrixXd data(16, 5);
  for (Eigen::Index c = 0; c < 5; ++c) {
    for (Eigen::Index r = 0; r < 16; ++r) data(r, c) = 0.05 * rng.normal();
  }
  const LinearLikelihood lik(obs, data);
  const PriorPotential p{&sys};
  const std::vector<double> u0(sys.dim(), 0.0);
  const std::vector<double> ustar = map_estimate(p, lik, u0, 1e-10);
  const ConditionalPosteriorGaussian post(sys, obs, data);
  for (std::size_t i = 0; i < ustar.size(); ++i) {
    CHECK(ustar[i] == doctest::Approx(post.mean()[i]).epsilon(1e-6));
  }
}

TEST_CASE("map_estimate with zero data recovers the FEM solution") {
  const Mesh mesh = build_mesh(4);
  const FemSystem sys = small_system(4);
  const ObservationOperator obs = small_obs(mesh, 8, 0.01, 6);
  const LinearLikelihood lik(obs, Eigen::MatrixXd(8, 0));
  const PriorPotential p{&sys};
  const std::vector<double> ustar = map_estimate(p, lik, std::vector<double>(sys.dim(), 0.0), 1e-10);
  const std::vector<double> oracle = cg_solve(sys.a, sys.b, 1e-12, 1000).x;
  for (std::size_t i = 0; i < ustar.size(); ++i) {
    CHECK(ustar[i] == doctest::Approx(oracle[i]).epsilon(1e-6));
  }
}

TEST_CASE("sigmoid MAP is a local minimum") {
  const Mesh mesh = build_mesh(8);
  const FemSystem sys = small_system(8);
  const ObservationOperator obs = small_obs(mesh, 16, 0.01, 7);
  RngStream rng = RngStream::derive(48, 0);
  Eigen::MatrixXd data(16, 4);
  for (Eigen::Index c = 0; c < 4; ++c) {
    for (Eigen::Index r = 0; r < 16; ++r) data(r, c) = 0.05 + 0.01 * rng.normal();
  }
  const SigmoidLikelihood lik(obs, data);
  const PriorPotential p{&sys};
  const std::vector<double> ustar = map_estimate(p, lik, std::vector<double>(sys.dim(), 0.0), 1e-5);
  const double phi_star = phi_posterior(p, lik, ustar);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> u = ustar;
    for (double& v : u) v += 1e-3 * rng.normal();
    CHECK(phi_posterior(p, lik, u) >= phi_star);
  }
}

TEST_CASE("identity preconditioner acts as identity") {
  const Preconditioner m = Preconditioner::make_identity(5);
  std::vector<double> v = {1, 2, 3, 4, 5}, out(5);
  m.apply_m(v, out);
  CHECK(out == v);
  m.apply_sqrt(v, out);
  CHECK(out == v);
  m.apply_m_inverse(v, out);
  CHECK(out == v);
}

TEST_CASE("prior preconditioner is the exact inverse Hessian at mean theta") {
  const FemSystem sys = small_system(4);
  const Preconditioner m = Preconditioner::make_prior(sys);
  const std::size_t d = sys.dim();
  // S^T P S where P = A^T G^{-1} A and M = S S^T should be the identity
  std::vector<double> buf1(d), buf2(d);
  const PriorPotential p{&sys};
  auto apply = [&](std::span<const double> v, std::span<double> out) {
    m.apply_sqrt(v, buf1);
    p.hessian_apply(buf1, buf2);
    // S^T = G^{1/2} A^{-T}: reuse apply_sqrt's transpose via symmetry of the
    // whole composite — check the quadratic form instead
    std::copy(buf2.begin(), buf2.end(), out.begin());
  };
  // quadratic-form check: v^T S^T P S v == v^T v for random v
  RngStream rng = RngStream::derive(49, 0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> v(d);
    for (double& x : v) x = rng.normal();
    m.apply_sqrt(v, buf1);
    p.hessian_apply(buf1, buf2);
    double num = 0.0, den = 0.0;
    m.apply_sqrt(v, buf1);
    for (std::size_t i = 0; i < d; ++i) den += v[i] * v[i];
    // S v dotted with P S v equals v^T (S^T P S) v
    double quad = 0.0;
    for (std::size_t i = 0; i < d; ++i) quad += buf1[i] * buf2[i];
    num = quad;
    CHECK(num == doctest::Approx(den).epsilon(1e-8));
  }
}

TEST_CASE("preconditioner round trips and factors consistently") {
  const Mesh mesh = build_mesh(4);
  const FemSystem sys = small_system(4);
  const ObservationOperator obs = small_obs(mesh, 16, 0.01, 8);
  RngStream rng = RngStream::derive(50, 0);
  Eigen::MatrixXd data(16, 5);
  for (Eigen::Index c = 0; c < 5; ++c) {
    for (Eigen::Index r = 0; r < 16; ++r) data(r, c) = 0.05 * rng.normal();
  }
  const LinearLikelihood lik(obs, data);
  const Preconditioner m = Preconditioner::make_posterior(sys, obs, lik.n_obs());
  const std::size_t d = sys.dim();

  std::vector<double> v(d), t(d), back(d);
  for (int trial = 0; trial < 20; ++trial) {
    for (double& x : v) x = rng.normal();
    m.apply_m(v, t);
    m.apply_m_inverse(t, back);
    for (std::size_t i = 0; i < d; ++i) CHECK(back[i] == doctest::Approx(v[i]).epsilon(1e-8));
  }

  // dense check: S S^T == M
  Eigen::MatrixXd md(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  Eigen::MatrixXd sd(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  std::vector<double> e(d, 0.0), col(d);
  for (std::size_t j = 0; j < d; ++j) {
    e[j] = 1.0;
    m.apply_m(e, col);
    for (std::size_t i = 0; i < d; ++i) md(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
    m.apply_sqrt(e, col);
    for (std::size_t i = 0; i < d; ++i) sd(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
    e[j] = 0.0;
  }
  CHECK((sd * sd.transpose() - md).norm() / md.norm() < 1e-8);
  CHECK((md - md.transpose()).norm() / md.norm() < 1e-10);
}

TEST_CASE("gauss-newton preconditioner factors at the MAP point") {
  const Mesh mesh = build_mesh(4);
  const FemSystem sys = small_system(4);
  const ObservationOperator obs = small_obs(mesh, 8, 0.01, 9);
  RngStream rng = RngStream::derive(51, 0);
  Eigen::MatrixXd data(8, 3);
  for (Eigen::Index c = 0; c < 3; ++c) {
    for (Eigen::Index r = 0; r < 8; ++r) data(r, c) = 0.05 + 0.01 * rng.normal();
  }
  const SigmoidLikelihood lik(obs, data);
  const PriorPotential p{&sys};
  const std::vector<double> ustar = map_estimate(p, lik, std::vector<double>(sys.dim(), 0.0), 1e-5);
  const Preconditioner m = Preconditioner::make_gauss_newton(sys, lik, ustar);
  std::vector<double> v(sys.dim()), t(sys.dim()), back(sys.dim());
  for (double& x : v) x = rng.normal();
  m.apply_m(v, t);
  m.apply_m_inverse(t, back);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(back[i] == doctest::Approx(v[i]).epsilon(1e-8));
}
