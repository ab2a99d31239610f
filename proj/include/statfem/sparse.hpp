#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace statfem {

/// Compressed-sparse-row matrix with sorted column indices. Symmetric
/// matrices store both triangles; `symmetric` is a promise, not a storage
/// scheme.
struct SparseMatrix {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<std::size_t> row_offsets;  // length n_rows + 1
  std::vector<std::size_t> col_indices;
  std::vector<double> values;
  bool symmetric = false;

  std::size_t nnz() const { return values.size(); }

  /// Build from coordinate triplets; duplicates are summed, columns sorted.
  static SparseMatrix from_triplets(std::size_t n_rows, std::size_t n_cols,
                                    std::vector<std::size_t> rows,
                                    std::vector<std::size_t> cols,
                                    std::vector<double> vals,
                                    bool symmetric = false);

  static SparseMatrix identity(std::size_t n);

  /// Half-bandwidth: max |i - j| over stored entries.
  std::size_t bandwidth() const;

  void check_structure() const;  // throws on malformed CSR
};

/// y = A x
std::vector<double> spmv(const SparseMatrix& a, std::span<const double> x);
void spmv(const SparseMatrix& a, std::span<const double> x, std::span<double> y);

/// y = A^T x
std::vector<double> spmv_transpose(const SparseMatrix& a, std::span<const double> x);

/// C = A^T diag(w) A, as CSR (symmetric). w has one weight per row of A.
SparseMatrix ata_weighted(const SparseMatrix& a, std::span<const double> w);

/// A + B (same shape).
SparseMatrix add(const SparseMatrix& a, const SparseMatrix& b);

struct CgResult {
  std::vector<double> x;
  std::size_t iterations = 0;
  double residual = 0.0;
};

/// Conjugate gradients on an SPD operator given by its action.
CgResult cg_solve(const std::function<void(std::span<const double>, std::span<double>)>& apply,
                  std::span<const double> b, double tol, std::size_t max_iter);
CgResult cg_solve(const SparseMatrix& a, std::span<const double> b, double tol,
                  std::size_t max_iter);

/// Lower-triangular band Cholesky factor, L stored row-wise within the band.
class BandedCholesky {
 public:
  /// Factor an SPD band matrix given in CSR form. Throws on a non-positive
  /// pivot, naming the row.
  explicit BandedCholesky(const SparseMatrix& a);

  std::size_t dim() const { return n_; }
  std::size_t bandwidth() const { return bandwidth_; }

  double entry(std::size_t i, std::size_t j) const;  // L(i, j), 0 outside band

  /// Solve L y = b.
  void solve_lower(std::span<const double> b, std::span<double> y) const;
  /// Solve L^T x = y.
  void solve_upper(std::span<const double> y, std::span<double> x) const;
  /// Solve (L L^T) x = b.
  std::vector<double> solve(std::span<const double> b) const;

  /// y = L x and y = L^T x (used to apply the factored matrix itself).
  void mult_lower(std::span<const double> x, std::span<double> y) const;
  void mult_upper(std::span<const double> x, std::span<double> y) const;

 private:
  std::size_t n_ = 0;
  std::size_t bandwidth_ = 0;
  std::vector<double> band_;  // (bandwidth_+1) entries per row

  double& at(std::size_t i, std::size_t j) { return band_[i * (bandwidth_ + 1) + (j + bandwidth_ - i)]; }
  double at(std::size_t i, std::size_t j) const { return band_[i * (bandwidth_ + 1) + (j + bandwidth_ - i)]; }
};

struct EigEstimate {
  double lambda_max = 0.0;
  double lambda_min = 0.0;
  std::size_t iterations_used = 0;
  bool converged = false;

  double condition_number() const { return lambda_max / lambda_min; }
};

/// Extreme eigenvalues of an SPD operator. lambda_max by power iteration on
/// `apply`; lambda_min by power iteration on `apply_inverse` when given,
/// otherwise by inverse iteration with CG inner solves on `apply`.
EigEstimate extreme_eigs(
    const std::function<void(std::span<const double>, std::span<double>)>& apply,
    std::size_t n, double tol,
    const std::function<void(std::span<const double>, std::span<double>)>& apply_inverse = nullptr,
    std::size_t max_iter = 5000);

}  // namespace statfem
