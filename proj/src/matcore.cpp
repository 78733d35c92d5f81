#include "ttime/matcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ttime/errors.hpp"

namespace ttime {

SymMatrix::SymMatrix(std::size_t dim) : dim_(dim), a_(dim * dim, 0.0) {
  if (dim == 0) throw ShapeError("SymMatrix: dim must be >= 1");
}

SymMatrix SymMatrix::from_entries(std::size_t dim, std::span<const double> entries) {
  if (entries.size() != dim * dim) throw ShapeError("SymMatrix: entry count != dim^2");
  SymMatrix m(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    m.a_[i * dim + i] = entries[i * dim + i];
    for (std::size_t j = i + 1; j < dim; ++j)
      m.set(i, j, 0.5 * (entries[i * dim + j] + entries[j * dim + i]));
  }
  return m;
}

SymMatrix SymMatrix::identity(std::size_t dim) {
  SymMatrix m(dim);
  for (std::size_t i = 0; i < dim; ++i) m.a_[i * dim + i] = 1.0;
  return m;
}

SymMatrix SymMatrix::diagonal(std::span<const double> diag) {
  SymMatrix m(diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m.a_[i * diag.size() + i] = diag[i];
  return m;
}

void SymMatrix::add(std::size_t i, std::size_t j, double v) {
  a_[i * dim_ + j] += v;
  if (i != j) a_[j * dim_ + i] += v;
}

double SymMatrix::trace() const {
  double t = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) t += a_[i * dim_ + i];
  return t;
}

double SymMatrix::frobenius_norm() const {
  double s = 0.0;
  for (double v : a_) s += v * v;
  return std::sqrt(s);
}

bool SymMatrix::all_finite() const {
  return std::all_of(a_.begin(), a_.end(), [](double v) { return std::isfinite(v); });
}

SymMatrix& SymMatrix::operator+=(const SymMatrix& other) {
  if (other.dim_ != dim_) throw ShapeError("SymMatrix: dimension mismatch in +=");
  for (std::size_t i = 0; i < a_.size(); ++i) a_[i] += other.a_[i];
  return *this;
}

SymMatrix& SymMatrix::operator*=(double s) {
  for (double& v : a_) v *= s;
  return *this;
}

namespace {

double off_diagonal_norm(const std::vector<double>& a, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) s += a[i * n + j] * a[i * n + j];
  return std::sqrt(s);
}

}  // namespace

EigPair sym_eig(const SymMatrix& input) {
  if (!input.all_finite()) throw NumericalError("sym_eig: non-finite entry");
  const std::size_t n = input.dim();
  std::vector<double> a(input.entries().begin(), input.entries().end());
  std::vector<double> v(n * n, 0.0);  // row-major here, transposed on output
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

  const double target = 1e-12 * input.frobenius_norm();
  constexpr int kMaxSweeps = 100;
  int sweep = 0;
  for (; sweep < kMaxSweeps; ++sweep) {
    if (off_diagonal_norm(a, n) <= target) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        double t;
        if (std::abs(theta) > 1e150) {
          t = 0.5 / theta;
        } else {
          t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
          if (theta < 0.0) t = -t;
        }
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        a[p * n + q] = 0.0;
        a[q * n + p] = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  if (sweep == kMaxSweeps && off_diagonal_norm(a, n) > target)
    throw ConvergenceError("sym_eig: Jacobi sweeps exhausted");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a[i * n + i] > a[j * n + j]; });

  EigPair out;
  out.dim = n;
  out.values.resize(n);
  out.vectors.resize(n * n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    out.values[j] = a[src * n + src];
    for (std::size_t k = 0; k < n; ++k) out.vectors[j * n + k] = v[k * n + src];
  }
  return out;
}

double relative_floor(const SymMatrix& r) {
  const double f = 1e-12 * r.trace() / static_cast<double>(r.dim());
  return std::max(f, std::numeric_limits<double>::min());
}

SymMatrix inv_sqrt(const SymMatrix& r, double floor) {
  if (!(floor > 0.0)) throw NumericalError("inv_sqrt: floor must be positive");
  const EigPair eig = sym_eig(r);
  const std::size_t n = r.dim();
  std::vector<double> scale(n);
  for (std::size_t j = 0; j < n; ++j) scale[j] = 1.0 / std::sqrt(std::max(eig.values[j], floor));

  SymMatrix out(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = i; k < n; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += eig.vectors[j * n + i] * scale[j] * eig.vectors[j * n + k];
      out.set(i, k, s);
    }
  }
  if (!out.all_finite()) throw NumericalError("inv_sqrt: non-finite result");
  return out;
}

namespace {

std::vector<double> sym_matvec(const SymMatrix& q, std::span<const double> x) {
  const std::size_t n = q.dim();
  std::vector<double> y(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += q(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

// Residual ||Qv - (v'Qv) v|| for unit v.
double eig_residual(const SymMatrix& q, std::span<const double> v, double& lambda) {
  const auto qv = sym_matvec(q, v);
  lambda = std::inner_product(v.begin(), v.end(), qv.begin(), 0.0);
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = qv[i] - lambda * v[i];
    s += d * d;
  }
  return std::sqrt(s);
}

void fix_sign(std::vector<double>& v) {
  const double sum = std::accumulate(v.begin(), v.end(), 0.0);
  bool flip = sum < 0.0;
  if (sum == 0.0) {
    for (double x : v) {
      if (x != 0.0) {
        flip = x < 0.0;
        break;
      }
    }
  }
  if (flip)
    for (double& x : v) x = -x;
}

}  // namespace

std::vector<double> principal_eigenvector(const SymMatrix& q, PowerIterationOptions opts) {
  if (opts.max_iter < 1) throw ConvergenceError("principal_eigenvector: max_iter must be >= 1");
  if (!q.all_finite()) throw NumericalError("principal_eigenvector: non-finite entry");
  const std::size_t n = q.dim();
  const double q_norm = q.frobenius_norm();

  double shift = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += std::abs(q(i, j));
    shift = std::max(shift, row);
  }
  if (shift == 0.0) {
    std::vector<double> v(n, 1.0 / std::sqrt(static_cast<double>(n)));
    return v;
  }

  // P = (Q + sI) has spectrum in [0, 2s]; its dominant direction is Q's top one.
  std::vector<double> p(q.entries().begin(), q.entries().end());
  for (std::size_t i = 0; i < n; ++i) p[i * n + i] += shift;
  auto normalize_block = [&](std::vector<double>& m) {
    const double s = norm2(m);
    for (double& x : m) x /= s;
  };
  normalize_block(p);

  auto best_column = [&](const std::vector<double>& m) {
    std::size_t best = 0;
    double best_norm = -1.0;
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += m[i * n + j] * m[i * n + j];
      if (s > best_norm) {
        best_norm = s;
        best = j;
      }
    }
    std::vector<double> v(n);
    const double nn = std::sqrt(best_norm);
    for (std::size_t i = 0; i < n; ++i) v[i] = m[i * n + best] / nn;
    return v;
  };

  std::vector<double> best_v;
  double best_res = std::numeric_limits<double>::infinity();
  int polish_left = -1;
  std::vector<double> sq(n * n);
  constexpr int kMaxSquarings = 64;

  int iter = 0;
  for (int squarings = 0; iter < opts.max_iter && squarings < kMaxSquarings; ++iter, ++squarings) {
    auto v = best_column(p);
    double lambda = 0.0;
    const double res = eig_residual(q, v, lambda);
    const double bound = opts.tol * std::max(std::abs(lambda), q_norm);
    if (res < best_res) {
      best_res = res;
      best_v = v;
    } else if (polish_left >= 0) {
      break;  // stagnated at rounding level
    }
    if (polish_left < 0 && res <= bound) polish_left = 3;
    if (polish_left == 0) break;
    if (polish_left > 0) --polish_left;
    matmul(p, p, sq, n, n, n);
    p.swap(sq);
    normalize_block(p);
  }

  // Plain shifted power steps, in case squaring stagnated before tolerance.
  auto v = best_v;
  for (; iter < opts.max_iter; ++iter) {
    double lambda = 0.0;
    const double res = eig_residual(q, v, lambda);
    if (res < best_res) {
      best_res = res;
      best_v = v;
    }
    if (best_res <= opts.tol * std::max(std::abs(lambda), q_norm)) break;
    auto w = sym_matvec(q, v);
    for (std::size_t i = 0; i < n; ++i) w[i] += shift * v[i];
    const double nw = norm2(w);
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nw;
  }

  double lambda = 0.0;
  const double res = eig_residual(q, best_v, lambda);
  if (!(res <= opts.tol * std::max(std::abs(lambda), q_norm)))
    throw ConvergenceError("principal_eigenvector: no convergence within max_iter");
  fix_sign(best_v);
  return best_v;
}

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t n, std::size_t k, std::size_t m) {
  std::fill(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(n * m), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = c.data() + i * m;
    for (std::size_t l = 0; l < k; ++l) {
      const double ail = a[i * k + l];
      if (ail == 0.0) continue;
      const double* bl = b.data() + l * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += ail * bl[j];
    }
  }
}

}  // namespace ttime
