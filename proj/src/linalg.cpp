#include "heartbrain/linalg.hpp"

#include <cmath>
#include <string>

#include "heartbrain/errors.hpp"

namespace hb {

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionMismatch("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::transpose() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw DimensionMismatch("matmul: inner dimensions differ");
  DenseMatrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

double frobenius_norm(const DenseMatrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

double dot_product(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

DenseMatrix cholesky_factor(const DenseMatrix& a) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw DimensionMismatch("cholesky_factor: matrix is not square");
  double scale = 0.0;
  for (double v : a.data()) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(a(i, j) - a(j, i)) > 1e-10 * scale)
        throw ValidationError("cholesky_factor: matrix is not symmetric at (" +
                              std::to_string(i) + ", " + std::to_string(j) + ")");

  // Row-oriented Cholesky–Crout: each entry is a dot product of two
  // contiguous prefixes of already-computed rows.
  DenseMatrix l(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* li = &l(i, 0);
    for (std::size_t j = 0; j < i; ++j) {
      const double* lj = &l(j, 0);
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= li[k] * lj[k];
      l(i, j) = s / l(j, j);
    }
    double d = a(i, i);
    for (std::size_t k = 0; k < i; ++k) d -= li[k] * li[k];
    if (!(d > 0.0) || !std::isfinite(d)) throw NotPositiveDefinite(i);
    l(i, i) = std::sqrt(d);
  }
  return l;
}

void solve_lower_in_place(const DenseMatrix& lower, std::span<double> b) {
  const std::size_t n = lower.rows();
  if (b.size() != n) throw DimensionMismatch("triangular solve: length mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    const double* li = lower.row(i).data();
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= li[k] * b[k];
    b[i] = s / li[i];
  }
}

void solve_lower_transpose_in_place(const DenseMatrix& lower,
                                    std::span<double> b) {
  const std::size_t n = lower.rows();
  if (b.size() != n) throw DimensionMismatch("triangular solve: length mismatch");
  for (std::size_t i = n; i-- > 0;) {
    b[i] /= lower(i, i);
    const double bi = b[i];
    const double* li = lower.row(i).data();
    for (std::size_t k = 0; k < i; ++k) b[k] -= li[k] * bi;
  }
}

std::vector<double> cholesky_solve(const DenseMatrix& lower,
                                   std::span<const double> b) {
  if (b.size() != lower.rows())
    throw DimensionMismatch("cholesky_solve: rhs has length " +
                            std::to_string(b.size()) + ", factor has " +
                            std::to_string(lower.rows()) + " rows");
  std::vector<double> x(b.begin(), b.end());
  solve_lower_in_place(lower, x);
  solve_lower_transpose_in_place(lower, x);
  return x;
}

DenseMatrix cholesky_inverse(const DenseMatrix& lower) {
  const std::size_t n = lower.rows();
  // W = L⁻¹ (lower triangular), then A⁻¹ = Wᵀ W.
  DenseMatrix w(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    w(j, j) = 1.0 / lower(j, j);
    for (std::size_t i = j + 1; i < n; ++i) {
      const double* li = lower.row(i).data();
      double s = 0.0;
      for (std::size_t k = j; k < i; ++k) s -= li[k] * w(k, j);
      w(i, j) = s / li[i];
    }
  }
  DenseMatrix inv(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const double* wk = &w(k, 0);
    for (std::size_t i = 0; i <= k; ++i) {
      const double wki = wk[i];
      if (wki == 0.0) continue;
      double* row = &inv(i, 0);
      for (std::size_t j = 0; j <= i; ++j) row[j] += wki * wk[j];
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) inv(j, i) = inv(i, j);
  return inv;
}

double cholesky_log_det(const DenseMatrix& lower) {
  double s = 0.0;
  for (std::size_t i = 0; i < lower.rows(); ++i) s += std::log(lower(i, i));
  return 2.0 * s;
}

}  // namespace hb
