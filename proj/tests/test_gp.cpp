#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "statfem/fem.hpp"
#include "statfem/gp.hpp"
#include "statfem/rng.hpp"

using namespace statfem;

namespace {

std::vector<double> unit_grid(std::size_t n_m) {
  std::vector<double> coords(n_m);
  for (std::size_t i = 0; i < n_m; ++i) {
    coords[i] = static_cast<double>(i) / static_cast<double>(n_m - 1);
  }
  return coords;
}

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("axis-1 kernel carries the full amplitude") {
  const GpSpec gp{0.1, 0.2, default_log_mean};
  const Eigen::MatrixXd k1 = se_kernel_1d(unit_grid(4), gp.sigma * gp.sigma, gp.length_scale);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(k1(i, i) == doctest::Approx(0.01));
}

TEST_CASE("kernel is continuous at coincident coordinates") {
  const std::vector<double> coords = {0.3, 0.3 + 1e-9};
  const Eigen::MatrixXd k = se_kernel_1d(coords, 0.01, 0.2);
  CHECK(k(0, 1) == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("Kronecker factors reconstruct the dense 2D kernel") {
  const GpSpec gp{0.1, 0.2, default_log_mean};
  const std::vector<double> coords = unit_grid(4);
  const KroneckerFactor f = build_kron_factor(coords, gp);
  const Eigen::MatrixXd k_factored =
      kron(f.l1 * f.l1.transpose(), f.l2 * f.l2.transpose());

  // dense oracle: node index ix*4+iy, k = sigma^2 exp(-|dx|^2/(2 l^2))
  Eigen::MatrixXd k_dense(16, 16);
  for (int a = 0; a < 16; ++a) {
    for (int b = 0; b < 16; ++b) {
      const double dx = coords[static_cast<std::size_t>(a / 4)] - coords[static_cast<std::size_t>(b / 4)];
      const double dy = coords[static_cast<std::size_t>(a % 4)] - coords[static_cast<std::size_t>(b % 4)];
      k_dense(a, b) = 0.01 * std::exp(-(dx * dx + dy * dy) / (2.0 * 0.2 * 0.2));
    }
  }
  CHECK((k_factored - k_dense).norm() / k_dense.norm() < 1e-8);
}

TEST_CASE("vec-trick sample equals the dense Kronecker sample") {
  const GpSpec gp{0.1, 0.2, default_log_mean};
  const std::vector<double> coords = unit_grid(4);
  const KroneckerFactor f = build_kron_factor(coords, gp);

  RngStream rng = RngStream::derive(31, 0);
  RngStream replay = rng;  // identical stream: replay the exact Z draws
  const ThetaField theta = sample_theta(f, gp, rng);

  Eigen::VectorXd vec_z(16);
  for (Eigen::Index c = 0; c < 4; ++c) {
    for (Eigen::Index r = 0; r < 4; ++r) vec_z(c * 4 + r) = replay.normal();
  }
  const Eigen::VectorXd dense_field = kron(f.l1, f.l2) * vec_z;
  for (int idx = 0; idx < 16; ++idx) {
    const double mean = gp.mean_fn(coords[static_cast<std::size_t>(idx / 4)],
                                   coords[static_cast<std::size_t>(idx % 4)]);
    CHECK(theta.log_values[static_cast<std::size_t>(idx)] ==
          doctest::Approx(mean + dense_field(idx)).epsilon(1e-12));
  }
}

TEST_CASE("degenerate amplitude recovers the mean field") {
  const GpSpec gp{1e-12, 0.2, default_log_mean};
  const std::vector<double> coords = unit_grid(3);
  const KroneckerFactor f = build_kron_factor(coords, gp);
  RngStream rng = RngStream::derive(32, 0);
  const ThetaField theta = sample_theta(f, gp, rng);
  CHECK(theta.values[0] == doctest::Approx(1.0).epsilon(1e-6));  // 1 + 0.3 sin(0)
  for (std::size_t i = 0; i < 9; ++i) {
    const double mean = gp.mean_fn(coords[i / 3], coords[i % 3]);
    CHECK(theta.log_values[i] == doctest::Approx(mean).epsilon(1e-6));
  }
}

TEST_CASE("empirical covariance matches K1 kron K2") {
  const GpSpec gp{0.1, 0.2, default_log_mean};
  const std::vector<double> coords = unit_grid(3);
  const KroneckerFactor f = build_kron_factor(coords, gp);
  const Eigen::MatrixXd k = kron(f.l1 * f.l1.transpose(), f.l2 * f.l2.transpose());

  const int n_draws = 100000;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(9, 9);
  Eigen::VectorXd mean_sum = Eigen::VectorXd::Zero(9);
  RngStream rng = RngStream::derive(33, 0);
  Eigen::VectorXd centered(9);
  for (int s = 0; s < n_draws; ++s) {
    const ThetaField theta = sample_theta(f, gp, rng);
    for (int i = 0; i < 9; ++i) {
      const double m = gp.mean_fn(coords[static_cast<std::size_t>(i / 3)],
                                  coords[static_cast<std::size_t>(i % 3)]);
      centered(i) = theta.log_values[static_cast<std::size_t>(i)] - m;
    }
    mean_sum += centered;
    sum += centered * centered.transpose();
  }
  const Eigen::MatrixXd emp = sum / n_draws;
  for (int i = 0; i < 9; ++i) {
    // mean contract: log-theta averages to the mean function at every node
    CHECK(std::abs(mean_sum(i) / n_draws) < 3.0 * std::sqrt(k(i, i) / n_draws));
    for (int j = 0; j < 9; ++j) {
      const double se = std::sqrt((k(i, i) * k(j, j) + k(i, j) * k(i, j)) / n_draws);
      CHECK(std::abs(emp(i, j) - k(i, j)) < 3.0 * se + 1e-12);
    }
  }
}

TEST_CASE("every sampled field passes the assembly ellipticity check") {
  const Mesh mesh = build_mesh(4);
  const GpSpec gp{0.1, 0.2, default_log_mean};
  const KroneckerFactor f = build_kron_factor(unit_grid(5), gp);
  RngStream rng = RngStream::derive(34, 0);
  for (int s = 0; s < 50; ++s) {
    const ThetaField theta = sample_theta(f, gp, rng);
    for (double v : theta.values) CHECK(v > 0.0);
    CHECK_NOTHROW((void)assemble(mesh, theta.values, 1.0, 0.05));
  }
}

TEST_CASE("build_kron_factor validates inputs") {
  const GpSpec gp{0.1, 0.2, default_log_mean};
  CHECK_THROWS_AS((void)build_kron_factor(std::vector<double>{0.0, 0.0, 1.0}, gp),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)build_kron_factor(unit_grid(3), GpSpec{0.0, 0.2, default_log_mean}),
                  std::invalid_argument);
}
