#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "statfem/diagnostics.hpp"
#include "statfem/fem.hpp"
#include "statfem/rng.hpp"
#include "statfem/sparse.hpp"

using namespace statfem;

namespace {

SparseMatrix random_sparse(std::size_t n_rows, std::size_t n_cols, RngStream& rng) {
  std::vector<std::size_t> rows, cols;
  std::vector<double> vals;
  for (std::size_t i = 0; i < n_rows; ++i) {
    for (std::size_t j = 0; j < n_cols; ++j) {
      if (rng.uniform() < 0.3) {
        rows.push_back(i);
        cols.push_back(j);
        vals.push_back(rng.normal());
      }
    }
  }
  return SparseMatrix::from_triplets(n_rows, n_cols, rows, cols, vals);
}

SparseMatrix random_band_spd(std::size_t n, std::size_t bw, RngStream& rng) {
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                            static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i > bw ? i - bw : 0; j <= i; ++j) {
      b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rng.normal();
    }
  }
  const Eigen::MatrixXd spd =
      b * b.transpose() + 0.5 * static_cast<double>(n) * Eigen::MatrixXd::Identity(n, n);
  std::vector<std::size_t> rows, cols;
  std::vector<double> vals;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i > bw ? i - bw : 0; j < std::min(n, i + bw + 1); ++j) {
      rows.push_back(i);
      cols.push_back(j);
      vals.push_back(spd(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
  }
  return SparseMatrix::from_triplets(n, n, rows, cols, vals, /*symmetric=*/true);
}

}  // namespace

TEST_CASE("spmv on the identity") {
  const SparseMatrix eye = SparseMatrix::identity(3);
  const std::vector<double> x = {1.0, 2.0, 3.0};
  CHECK(spmv(eye, x) == x);
}

TEST_CASE("spmv of an empty matrix is zero") {
  const SparseMatrix zero = SparseMatrix::from_triplets(4, 4, {}, {}, {});
  for (double v : spmv(zero, std::vector<double>{1, 2, 3, 4})) CHECK(v == 0.0);
}

TEST_CASE("spmv agrees with the dense oracle") {
  RngStream rng = RngStream::derive(11, 0);
  for (std::size_t n : {5u, 17u, 50u}) {
    const SparseMatrix a = random_sparse(n, n, rng);
    const Eigen::MatrixXd dense = to_dense(a);
    Eigen::VectorXd x(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
    const std::vector<double> xs(x.data(), x.data() + n);
    const std::vector<double> y = spmv(a, xs);
    const Eigen::VectorXd yd = dense * x;
    for (std::size_t i = 0; i < n; ++i) CHECK(y[i] == doctest::Approx(yd(i)).epsilon(1e-14));
    const std::vector<double> yt = spmv_transpose(a, xs);
    const Eigen::VectorXd ytd = dense.transpose() * x;
    for (std::size_t i = 0; i < n; ++i) CHECK(yt[i] == doctest::Approx(ytd(i)).epsilon(1e-13));
  }
}

TEST_CASE("from_triplets merges duplicates and sorts columns") {
  const SparseMatrix a = SparseMatrix::from_triplets(2, 2, {0, 0, 1}, {1, 1, 0}, {2.0, 3.0, 4.0});
  CHECK(a.nnz() == 2);
  const std::vector<double> y = spmv(a, std::vector<double>{1.0, 1.0});
  CHECK(y[0] == 5.0);
  CHECK(y[1] == 4.0);
  a.check_structure();
}

TEST_CASE("ata_weighted matches the dense oracle") {
  RngStream rng = RngStream::derive(12, 0);
  const SparseMatrix a = random_sparse(8, 6, rng);
  std::vector<double> w(8);
  for (double& v : w) v = 0.5 + rng.uniform();
  const SparseMatrix c = ata_weighted(a, w);
  Eigen::VectorXd wd(8);
  for (int i = 0; i < 8; ++i) wd(i) = w[static_cast<std::size_t>(i)];
  const Eigen::MatrixXd oracle = to_dense(a).transpose() * wd.asDiagonal() * to_dense(a);
  CHECK((to_dense(c) - oracle).norm() < 1e-12 * (1.0 + oracle.norm()));
}

TEST_CASE("cg solves the identity in one iteration") {
  const SparseMatrix eye = SparseMatrix::identity(4);
  const std::vector<double> b = {1, 2, 3, 4};
  const CgResult res = cg_solve(eye, b, 1e-12, 10);
  CHECK(res.iterations <= 1);
  for (std::size_t i = 0; i < 4; ++i) CHECK(res.x[i] == doctest::Approx(b[i]));
}

TEST_CASE("cg on a diagonal system") {
  const SparseMatrix d =
      SparseMatrix::from_triplets(3, 3, {0, 1, 2}, {0, 1, 2}, {1.0, 2.0, 4.0}, true);
  const CgResult res = cg_solve(d, std::vector<double>{1.0, 2.0, 4.0}, 1e-12, 20);
  for (double v : res.x) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("cg zero rhs returns zero immediately") {
  const SparseMatrix eye = SparseMatrix::identity(3);
  const CgResult res = cg_solve(eye, std::vector<double>{0, 0, 0}, 1e-12, 10);
  CHECK(res.iterations == 0);
  for (double v : res.x) CHECK(v == 0.0);
}

TEST_CASE("cg matches a dense solve on the 8x8 mesh stiffness") {
  const Mesh mesh = build_mesh(8);
  const std::vector<double> theta(mesh.n_nodes(), 1.0);
  const FemSystem sys = assemble(mesh, theta, 1.0, 0.05);
  const CgResult res = cg_solve(sys.a, sys.b, 1e-10, 2000);
  const Eigen::MatrixXd dense = to_dense(sys.a);
  Eigen::VectorXd bd(static_cast<Eigen::Index>(sys.b.size()));
  for (std::size_t i = 0; i < sys.b.size(); ++i) bd(static_cast<Eigen::Index>(i)) = sys.b[i];
  const Eigen::VectorXd oracle = dense.lu().solve(bd);
  double err = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < sys.b.size(); ++i) {
    err += std::pow(res.x[i] - oracle(static_cast<Eigen::Index>(i)), 2);
    norm += oracle(static_cast<Eigen::Index>(i)) * oracle(static_cast<Eigen::Index>(i));
  }
  CHECK(std::sqrt(err / norm) < 1e-8);
}

TEST_CASE("cg reports non-convergence") {
  const Mesh mesh = build_mesh(8);
  const std::vector<double> theta(mesh.n_nodes(), 1.0);
  const FemSystem sys = assemble(mesh, theta, 1.0, 0.05);
  CHECK_THROWS_AS((void)cg_solve(sys.a, sys.b, 1e-14, 2), std::runtime_error);
}

TEST_CASE("banded cholesky of diag(4,9)") {
  const SparseMatrix d = SparseMatrix::from_triplets(2, 2, {0, 1}, {0, 1}, {4.0, 9.0}, true);
  const BandedCholesky chol(d);
  CHECK(chol.entry(0, 0) == doctest::Approx(2.0));
  CHECK(chol.entry(1, 1) == doctest::Approx(3.0));
  CHECK(chol.entry(1, 0) == 0.0);
}

TEST_CASE("banded cholesky of [[2,1],[1,2]]") {
  const SparseMatrix a =
      SparseMatrix::from_triplets(2, 2, {0, 0, 1, 1}, {0, 1, 0, 1}, {2.0, 1.0, 1.0, 2.0}, true);
  const BandedCholesky chol(a);
  CHECK(chol.entry(0, 0) == doctest::Approx(std::sqrt(2.0)));
  CHECK(chol.entry(1, 0) == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(chol.entry(1, 1) == doctest::Approx(std::sqrt(1.5)));
}

TEST_CASE("banded cholesky reconstructs random SPD band matrices") {
  RngStream rng = RngStream::derive(13, 0);
  const SparseMatrix a = random_band_spd(20, 3, rng);
  const BandedCholesky chol(a);
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(20, 20);
  for (std::size_t i = 0; i < 20; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      l(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = chol.entry(i, j);
    }
  }
  const Eigen::MatrixXd dense = to_dense(a);
  CHECK((l * l.transpose() - dense).norm() / dense.norm() < 1e-10);

  // solve composed with the matrix is the identity
  std::vector<double> x(20);
  for (double& v : x) v = rng.normal();
  const std::vector<double> back = chol.solve(spmv(a, x));
  for (std::size_t i = 0; i < 20; ++i) CHECK(back[i] == doctest::Approx(x[i]).epsilon(1e-8));
}

TEST_CASE("banded cholesky rejects indefinite input naming the row") {
  const SparseMatrix a =
      SparseMatrix::from_triplets(2, 2, {0, 1}, {0, 1}, {1.0, -1.0}, true);
  CHECK_THROWS_WITH_AS(BandedCholesky{a}, doctest::Contains("row 1"), std::runtime_error);
}

TEST_CASE("extreme_eigs on diag(1,2,3)") {
  const SparseMatrix d =
      SparseMatrix::from_triplets(3, 3, {0, 1, 2}, {0, 1, 2}, {1.0, 2.0, 3.0}, true);
  auto apply = [&](std::span<const double> v, std::span<double> out) { spmv(d, v, out); };
  const EigEstimate est = extreme_eigs(apply, 3, 1e-8);
  CHECK(est.lambda_max == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(est.lambda_min == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(est.converged);
}

TEST_CASE("extreme_eigs on the identity") {
  const SparseMatrix eye = SparseMatrix::identity(5);
  auto apply = [&](std::span<const double> v, std::span<double> out) { spmv(eye, v, out); };
  const EigEstimate est = extreme_eigs(apply, 5, 1e-8);
  CHECK(est.lambda_max == doctest::Approx(1.0));
  CHECK(est.lambda_min == doctest::Approx(1.0));
  CHECK(est.condition_number() == doctest::Approx(1.0));
}

TEST_CASE("extreme_eigs matches the dense eigensolver on a FEM precision") {
  const Mesh mesh = build_mesh(8);
  const std::vector<double> theta(mesh.n_nodes(), 1.0);
  const FemSystem sys = assemble(mesh, theta, 1.0, 0.05);
  const Eigen::MatrixXd p = dense_precision(sys);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(p);

  const std::size_t d = sys.dim();
  auto apply = [&](std::span<const double> v, std::span<double> out) {
    const std::vector<double> av = spmv(sys.a, v);
    std::vector<double> t(d);
    for (std::size_t i = 0; i < d; ++i) t[i] = av[i] / sys.g[i];
    spmv(sys.a, t, out);
  };
  const BandedCholesky chol(sys.a);
  auto apply_inv = [&](std::span<const double> v, std::span<double> out) {
    std::vector<double> t = chol.solve(v);
    for (std::size_t i = 0; i < d; ++i) t[i] *= sys.g[i];
    const std::vector<double> r = chol.solve(t);
    std::copy(r.begin(), r.end(), out.begin());
  };
  const EigEstimate est = extreme_eigs(apply, d, 1e-8, apply_inv);
  CHECK(est.lambda_max == doctest::Approx(eig.eigenvalues().maxCoeff()).epsilon(1e-6));
  CHECK(est.lambda_min == doctest::Approx(eig.eigenvalues().minCoeff()).epsilon(1e-6));
}

TEST_CASE("congruence transforms preserve positivity of the spectrum") {
  RngStream rng = RngStream::derive(14, 0);
  const SparseMatrix a = random_band_spd(12, 2, rng);
  const SparseMatrix s = random_band_spd(12, 2, rng);  // any invertible factor works
  std::vector<double> buf(12);
  auto apply = [&](std::span<const double> v, std::span<double> out) {
    spmv(s, v, buf);
    const std::vector<double> av = spmv(a, buf);
    spmv(s, av, out);  // s symmetric, so this is S^T A S
  };
  const EigEstimate est = extreme_eigs(apply, 12, 1e-6);
  CHECK(est.lambda_min > 0.0);
  CHECK(est.lambda_max >= est.lambda_min);
}
