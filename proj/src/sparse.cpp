#include "statfem/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "statfem/rng.hpp"

namespace statfem {

SparseMatrix SparseMatrix::from_triplets(std::size_t n_rows, std::size_t n_cols,
                                         std::vector<std::size_t> rows,
                                         std::vector<std::size_t> cols,
                                         std::vector<double> vals,
                                         bool symmetric) {
  if (rows.size() != cols.size() || rows.size() != vals.size()) {
    throw std::invalid_argument("from_triplets: triplet arrays differ in length");
  }
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return rows[a] != rows[b] ? rows[a] < rows[b] : cols[a] < cols[b];
  });

  SparseMatrix m;
  m.n_rows = n_rows;
  m.n_cols = n_cols;
  m.symmetric = symmetric;
  m.row_offsets.assign(n_rows + 1, 0);
  m.col_indices.reserve(rows.size());
  m.values.reserve(rows.size());
  for (std::size_t t : order) {
    if (rows[t] >= n_rows || cols[t] >= n_cols) {
      throw std::invalid_argument("from_triplets: index out of range");
    }
    m.col_indices.push_back(cols[t]);
    m.values.push_back(vals[t]);
    m.row_offsets[rows[t] + 1] += 1;
  }
  for (std::size_t r = 0; r < n_rows; ++r) m.row_offsets[r + 1] += m.row_offsets[r];

  // Merge duplicates in place, row by row.
  std::vector<std::size_t> new_offsets(n_rows + 1, 0);
  std::size_t w = 0;
  for (std::size_t r = 0; r < n_rows; ++r) {
    std::size_t begin = m.row_offsets[r], end = m.row_offsets[r + 1];
    std::size_t i = begin;
    while (i < end) {
      std::size_t c = m.col_indices[i];
      double v = m.values[i];
      std::size_t j = i + 1;
      while (j < end && m.col_indices[j] == c) {
        v += m.values[j];
        ++j;
      }
      m.col_indices[w] = c;
      m.values[w] = v;
      ++w;
      i = j;
    }
    new_offsets[r + 1] = w;
  }
  m.col_indices.resize(w);
  m.values.resize(w);
  m.row_offsets = std::move(new_offsets);
  m.check_structure();
  return m;
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
  SparseMatrix m;
  m.n_rows = m.n_cols = n;
  m.symmetric = true;
  m.row_offsets.resize(n + 1);
  m.col_indices.resize(n);
  m.values.assign(n, 1.0);
  for (std::size_t i = 0; i <= n; ++i) m.row_offsets[i] = i;
  std::iota(m.col_indices.begin(), m.col_indices.end(), 0);
  return m;
}

std::size_t SparseMatrix::bandwidth() const {
  std::size_t bw = 0;
  for (std::size_t r = 0; r < n_rows; ++r) {
    for (std::size_t k = row_offsets[r]; k < row_offsets[r + 1]; ++k) {
      const std::size_t c = col_indices[k];
      bw = std::max(bw, c > r ? c - r : r - c);
    }
  }
  return bw;
}

void SparseMatrix::check_structure() const {
  if (row_offsets.size() != n_rows + 1 || row_offsets.front() != 0 ||
      row_offsets.back() != values.size() || col_indices.size() != values.size()) {
    throw std::invalid_argument("SparseMatrix: malformed CSR offsets");
  }
  for (std::size_t r = 0; r < n_rows; ++r) {
    if (row_offsets[r + 1] < row_offsets[r]) {
      throw std::invalid_argument("SparseMatrix: decreasing row offsets");
    }
    for (std::size_t k = row_offsets[r]; k + 1 < row_offsets[r + 1]; ++k) {
      if (col_indices[k] >= col_indices[k + 1]) {
        throw std::invalid_argument("SparseMatrix: columns not strictly increasing in row " +
                                    std::to_string(r));
      }
    }
  }
}

void spmv(const SparseMatrix& a, std::span<const double> x, std::span<double> y) {
  if (x.size() != a.n_cols || y.size() != a.n_rows) {
    throw std::invalid_argument("spmv: dimension mismatch");
  }
  for (std::size_t r = 0; r < a.n_rows; ++r) {
    double acc = 0.0;
    for (std::size_t k = a.row_offsets[r]; k < a.row_offsets[r + 1]; ++k) {
      acc += a.values[k] * x[a.col_indices[k]];
    }
    y[r] = acc;
  }
}

std::vector<double> spmv(const SparseMatrix& a, std::span<const double> x) {
  std::vector<double> y(a.n_rows);
  spmv(a, x, y);
  return y;
}

std::vector<double> spmv_transpose(const SparseMatrix& a, std::span<const double> x) {
  if (x.size() != a.n_rows) {
    throw std::invalid_argument("spmv_transpose: dimension mismatch");
  }
  std::vector<double> y(a.n_cols, 0.0);
  for (std::size_t r = 0; r < a.n_rows; ++r) {
    for (std::size_t k = a.row_offsets[r]; k < a.row_offsets[r + 1]; ++k) {
      y[a.col_indices[k]] += a.values[k] * x[r];
    }
  }
  return y;
}

SparseMatrix ata_weighted(const SparseMatrix& a, std::span<const double> w) {
  if (w.size() != a.n_rows) {
    throw std::invalid_argument("ata_weighted: weight length != n_rows");
  }
  std::vector<std::size_t> rows, cols;
  std::vector<double> vals;
  rows.reserve(a.nnz() * 4);
  cols.reserve(a.nnz() * 4);
  vals.reserve(a.nnz() * 4);
  for (std::size_t r = 0; r < a.n_rows; ++r) {
    for (std::size_t ki = a.row_offsets[r]; ki < a.row_offsets[r + 1]; ++ki) {
      for (std::size_t kj = a.row_offsets[r]; kj < a.row_offsets[r + 1]; ++kj) {
        rows.push_back(a.col_indices[ki]);
        cols.push_back(a.col_indices[kj]);
        vals.push_back(w[r] * a.values[ki] * a.values[kj]);
      }
    }
  }
  return SparseMatrix::from_triplets(a.n_cols, a.n_cols, std::move(rows), std::move(cols),
                                     std::move(vals), /*symmetric=*/true);
}

SparseMatrix add(const SparseMatrix& a, const SparseMatrix& b) {
  if (a.n_rows != b.n_rows || a.n_cols != b.n_cols) {
    throw std::invalid_argument("add: shape mismatch");
  }
  std::vector<std::size_t> rows, cols;
  std::vector<double> vals;
  rows.reserve(a.nnz() + b.nnz());
  cols.reserve(a.nnz() + b.nnz());
  vals.reserve(a.nnz() + b.nnz());
  for (const SparseMatrix* m : {&a, &b}) {
    for (std::size_t r = 0; r < m->n_rows; ++r) {
      for (std::size_t k = m->row_offsets[r]; k < m->row_offsets[r + 1]; ++k) {
        rows.push_back(r);
        cols.push_back(m->col_indices[k]);
        vals.push_back(m->values[k]);
      }
    }
  }
  return SparseMatrix::from_triplets(a.n_rows, a.n_cols, std::move(rows), std::move(cols),
                                     std::move(vals), a.symmetric && b.symmetric);
}

namespace {
double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}
double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }
}  // namespace

CgResult cg_solve(const std::function<void(std::span<const double>, std::span<double>)>& apply,
                  std::span<const double> b, double tol, std::size_t max_iter) {
  if (tol <= 0.0) throw std::invalid_argument("cg_solve: tol must be positive");
  const std::size_t n = b.size();
  CgResult out;
  out.x.assign(n, 0.0);
  const double bnorm = norm2(b);
  if (bnorm == 0.0) return out;

  std::vector<double> r(b.begin(), b.end());
  std::vector<double> p = r;
  std::vector<double> ap(n);
  double rs = dot(r, r);
  for (std::size_t it = 0; it < max_iter; ++it) {
    apply(p, ap);
    const double alpha = rs / dot(p, ap);
    for (std::size_t i = 0; i < n; ++i) {
      out.x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    const double rs_new = dot(r, r);
    out.iterations = it + 1;
    out.residual = std::sqrt(rs_new) / bnorm;
    if (out.residual <= tol) return out;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + (rs_new / rs) * p[i];
    rs = rs_new;
  }
  throw std::runtime_error("cg_solve: no convergence after " + std::to_string(max_iter) +
                           " iterations, relative residual " + std::to_string(out.residual));
}

CgResult cg_solve(const SparseMatrix& a, std::span<const double> b, double tol,
                  std::size_t max_iter) {
  if (a.n_rows != a.n_cols || b.size() != a.n_cols) {
    throw std::invalid_argument("cg_solve: dimension mismatch");
  }
  return cg_solve([&a](std::span<const double> x, std::span<double> y) { spmv(a, x, y); }, b,
                  tol, max_iter);
}

BandedCholesky::BandedCholesky(const SparseMatrix& a) {
  if (a.n_rows != a.n_cols) throw std::invalid_argument("BandedCholesky: matrix not square");
  n_ = a.n_rows;
  bandwidth_ = a.bandwidth();
  band_.assign(n_ * (bandwidth_ + 1), 0.0);

  // Copy the lower triangle of A into band storage.
  for (std::size_t r = 0; r < n_; ++r) {
    for (std::size_t k = a.row_offsets[r]; k < a.row_offsets[r + 1]; ++k) {
      const std::size_t c = a.col_indices[k];
      if (c <= r) at(r, c) = a.values[k];
    }
  }

  for (std::size_t j = 0; j < n_; ++j) {
    double diag = at(j, j);
    const std::size_t kmin = j > bandwidth_ ? j - bandwidth_ : 0;
    for (std::size_t k = kmin; k < j; ++k) diag -= at(j, k) * at(j, k);
    if (!(diag > 0.0)) {
      throw std::runtime_error("BandedCholesky: non-positive pivot at row " + std::to_string(j));
    }
    const double ljj = std::sqrt(diag);
    at(j, j) = ljj;
    const std::size_t imax = std::min(n_ - 1, j + bandwidth_);
    for (std::size_t i = j + 1; i <= imax; ++i) {
      double v = at(i, j);
      const std::size_t lo = std::max(i > bandwidth_ ? i - bandwidth_ : 0, kmin);
      for (std::size_t k = lo; k < j; ++k) v -= at(i, k) * at(j, k);
      at(i, j) = v / ljj;
    }
  }
}

double BandedCholesky::entry(std::size_t i, std::size_t j) const {
  if (j > i || i - j > bandwidth_) return 0.0;
  return at(i, j);
}

void BandedCholesky::solve_lower(std::span<const double> b, std::span<double> y) const {
  for (std::size_t i = 0; i < n_; ++i) {
    double v = b[i];
    const std::size_t kmin = i > bandwidth_ ? i - bandwidth_ : 0;
    for (std::size_t k = kmin; k < i; ++k) v -= at(i, k) * y[k];
    y[i] = v / at(i, i);
  }
}

void BandedCholesky::solve_upper(std::span<const double> y, std::span<double> x) const {
  for (std::size_t ii = n_; ii-- > 0;) {
    double v = y[ii];
    const std::size_t imax = std::min(n_ - 1, ii + bandwidth_);
    for (std::size_t k = ii + 1; k <= imax; ++k) v -= at(k, ii) * x[k];
    x[ii] = v / at(ii, ii);
  }
}

std::vector<double> BandedCholesky::solve(std::span<const double> b) const {
  std::vector<double> y(n_), x(n_);
  solve_lower(b, y);
  solve_upper(y, x);
  return x;
}

void BandedCholesky::mult_lower(std::span<const double> x, std::span<double> y) const {
  for (std::size_t ii = n_; ii-- > 0;) {
    double v = 0.0;
    const std::size_t kmin = ii > bandwidth_ ? ii - bandwidth_ : 0;
    for (std::size_t k = kmin; k <= ii; ++k) v += at(ii, k) * x[k];
    y[ii] = v;
  }
}

void BandedCholesky::mult_upper(std::span<const double> x, std::span<double> y) const {
  for (std::size_t i = 0; i < n_; ++i) {
    double v = 0.0;
    const std::size_t imax = std::min(n_ - 1, i + bandwidth_);
    for (std::size_t k = i; k <= imax; ++k) v += at(k, i) * x[k];
    y[i] = v;
  }
}

EigEstimate extreme_eigs(
    const std::function<void(std::span<const double>, std::span<double>)>& apply,
    std::size_t n, double tol,
    const std::function<void(std::span<const double>, std::span<double>)>& apply_inverse,
    std::size_t max_iter) {
  EigEstimate est;
  est.converged = true;

  auto power = [&](const std::function<void(std::span<const double>, std::span<double>)>& op,
                   std::uint64_t seed_id) {
    RngStream rng = RngStream::derive(0x5eed5eedULL, seed_id);
    std::vector<double> v(n), av(n);
    for (auto& x : v) x = rng.normal();
    double nv = norm2(v);
    for (auto& x : v) x /= nv;
    double lambda = 0.0, prev = 0.0;
    std::size_t it = 0;
    for (; it < max_iter; ++it) {
      op(v, av);
      lambda = dot(v, av);
      const double na = norm2(av);
      if (na == 0.0) break;
      for (std::size_t i = 0; i < n; ++i) v[i] = av[i] / na;
      if (it > 0 && std::abs(lambda - prev) <= tol * std::abs(lambda)) {
        est.iterations_used += it + 1;
        return lambda;
      }
      prev = lambda;
    }
    est.iterations_used += it;
    est.converged = false;
    return lambda;
  };

  est.lambda_max = power(apply, 17);
  if (apply_inverse) {
    const double inv_max = power(apply_inverse, 23);
    est.lambda_min = 1.0 / inv_max;
  } else {
    // Inverse iteration with CG inner solves.
    auto inv = [&](std::span<const double> x, std::span<double> y) {
      auto res = cg_solve(apply, x, 1e-8, 500 * n);
      std::copy(res.x.begin(), res.x.end(), y.begin());
    };
    const double inv_max = power(inv, 29);
    est.lambda_min = 1.0 / inv_max;
  }
  return est;
}

}  // namespace statfem
