#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace probe {

/// Row-major dense matrix. Small sizes only; this library never needs BLAS.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), entries_(rows * cols, fill) {}

  static DenseMatrix identity(std::size_t n);

  double& operator()(std::size_t i, std::size_t j) { return entries_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return entries_[i * cols_ + j]; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<const double> entries() const { return entries_; }
  std::span<double> entries() { return entries_; }

  bool all_finite() const;
  double max_abs() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> entries_;
};

DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix operator+(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix operator*(double s, const DenseMatrix& a);

std::vector<double> matvec(const DenseMatrix& a, std::span<const double> x);

/// exp(A*t) by scaling-and-squaring around a truncated Taylor core.
DenseMatrix matrix_exp(const DenseMatrix& a, double t = 1.0);

/// Determinant via LU with partial pivoting (copy is taken internally).
double determinant(const DenseMatrix& a);

}  // namespace probe
