#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace hb {

// Row-major dense matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  DenseMatrix transpose() const;

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
double frobenius_norm(const DenseMatrix& a);
double dot_product(std::span<const double> a, std::span<const double> b);

// Lower-triangular L with L·Lᵀ = A. Requires A symmetric within 1e-10 of its
// largest entry; throws NotPositiveDefinite carrying the failing pivot.
DenseMatrix cholesky_factor(const DenseMatrix& a);

// Solves (L·Lᵀ)x = b.
std::vector<double> cholesky_solve(const DenseMatrix& lower,
                                   std::span<const double> b);

// In-place triangular solves against the factor.
void solve_lower_in_place(const DenseMatrix& lower, std::span<double> b);
void solve_lower_transpose_in_place(const DenseMatrix& lower,
                                    std::span<double> b);

// (L·Lᵀ)⁻¹, symmetric.
DenseMatrix cholesky_inverse(const DenseMatrix& lower);

// log det(L·Lᵀ).
double cholesky_log_det(const DenseMatrix& lower);

}  // namespace hb
