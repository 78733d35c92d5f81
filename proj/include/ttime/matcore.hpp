#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ttime {

/// Dense symmetric matrix, row-major, with both triangles stored.
/// Every mutating path writes (i,j) and (j,i) together so symmetry is exact.
class SymMatrix {
 public:
  explicit SymMatrix(std::size_t dim);

  /// Builds from a full row-major block, symmetrizing as (A + A^T) / 2.
  /// Throws ShapeError when entries.size() != dim * dim.
  static SymMatrix from_entries(std::size_t dim, std::span<const double> entries);
  static SymMatrix identity(std::size_t dim);
  static SymMatrix diagonal(std::span<const double> diag);

  std::size_t dim() const { return dim_; }
  double operator()(std::size_t i, std::size_t j) const { return a_[i * dim_ + j]; }
  void set(std::size_t i, std::size_t j, double v) {
    a_[i * dim_ + j] = v;
    a_[j * dim_ + i] = v;
  }
  void add(std::size_t i, std::size_t j, double v);

  std::span<const double> entries() const { return a_; }

  double trace() const;
  double frobenius_norm() const;
  bool all_finite() const;

  SymMatrix& operator+=(const SymMatrix& other);
  SymMatrix& operator*=(double s);

 private:
  std::size_t dim_;
  std::vector<double> a_;
};

/// Eigenvalues sorted descending; vectors stored column-major in a dim x dim
/// block so column j (vectors[j*dim .. j*dim+dim)) pairs with values[j].
struct EigPair {
  std::vector<double> values;
  std::vector<double> vectors;
  std::size_t dim = 0;

  std::span<const double> vector(std::size_t j) const {
    return std::span<const double>(vectors).subspan(j * dim, dim);
  }
};

/// Cyclic Jacobi eigendecomposition.
/// Stops once the off-diagonal Frobenius mass is below 1e-12 * ||A||_F.
/// Throws NumericalError on non-finite input, ConvergenceError after 100 sweeps.
EigPair sym_eig(const SymMatrix& a);

/// V diag(max(lambda, floor)^{-1/2}) V^T.
SymMatrix inv_sqrt(const SymMatrix& r, double floor);

/// 1e-12 * trace(R) / dim, clamped to the smallest normal double.
double relative_floor(const SymMatrix& r);

struct PowerIterationOptions {
  double tol = 1e-10;
  int max_iter = 1000;
};

/// Unit eigenvector for the algebraically largest eigenvalue of Q, sign
/// chosen so sum(v) >= 0 (first non-zero entry positive when the sum is 0).
///
/// Shifted power iteration: Q + sI with s a Gershgorin bound so the spectrum
/// is non-negative, accelerated by repeated squaring of the shifted operator
/// and finished with plain power steps until
/// ||Qv - lambda v|| <= tol * max(|lambda|, ||Q||_F).
/// Throws ConvergenceError if that does not happen within max_iter steps.
std::vector<double> principal_eigenvector(const SymMatrix& q, PowerIterationOptions opts = {});

/// Plain dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data).subspan(i * cols, cols);
  }
  std::span<double> row(std::size_t i) { return std::span<double>(data).subspan(i * cols, cols); }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  bool operator==(const Matrix&) const = default;
};

/// C = A B for row-major A (n x k) and B (k x m).
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t n, std::size_t k, std::size_t m);

}  // namespace ttime
