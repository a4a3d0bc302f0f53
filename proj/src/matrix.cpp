#include "probe/matrix.hpp"

#include <cmath>
#include <string>

#include "probe/errors.hpp"

namespace probe {

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool DenseMatrix::all_finite() const {
  for (double e : entries_) {
    if (!std::isfinite(e)) return false;
  }
  return true;
}

double DenseMatrix::max_abs() const {
  double m = 0.0;
  for (double e : entries_) m = std::max(m, std::abs(e));
  return m;
}

DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw ValidationError("matrix multiply: dimension mismatch " +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.rows()));
  }
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

DenseMatrix operator+(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ValidationError("matrix add: dimension mismatch");
  }
  DenseMatrix c = a;
  for (std::size_t i = 0; i < c.entries().size(); ++i) c.entries()[i] += b.entries()[i];
  return c;
}

DenseMatrix operator*(double s, const DenseMatrix& a) {
  DenseMatrix c = a;
  for (double& e : c.entries()) e *= s;
  return c;
}

std::vector<double> matvec(const DenseMatrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) {
    throw ValidationError("matvec: dimension mismatch");
  }
  std::vector<double> y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) acc += a(i, j) * x[j];
    y[i] = acc;
  }
  return y;
}

DenseMatrix matrix_exp(const DenseMatrix& a, double t) {
  if (a.rows() != a.cols()) {
    throw ValidationError("matrix_exp: matrix must be square");
  }
  if (!a.all_finite() || !std::isfinite(t)) {
    throw NumericError("matrix_exp: non-finite input");
  }
  const std::size_t n = a.rows();
  DenseMatrix scaled = t * a;

  // Scale until the norm is small enough for a rapidly converging series.
  int squarings = 0;
  double norm = scaled.max_abs() * static_cast<double>(n);
  while (norm > 0.5 && squarings < 60) {
    scaled = 0.5 * scaled;
    norm *= 0.5;
    ++squarings;
  }

  DenseMatrix result = DenseMatrix::identity(n);
  DenseMatrix term = DenseMatrix::identity(n);
  for (int k = 1; k <= 30; ++k) {
    term = (1.0 / static_cast<double>(k)) * (term * scaled);
    result = result + term;
    if (term.max_abs() < 1e-19) break;
  }
  for (int s = 0; s < squarings; ++s) result = result * result;
  if (!result.all_finite()) {
    throw NumericError("matrix_exp: non-finite result");
  }
  return result;
}

double determinant(const DenseMatrix& a) {
  if (a.rows() != a.cols()) {
    throw ValidationError("determinant: matrix must be square");
  }
  const std::size_t n = a.rows();
  DenseMatrix lu = a;
  double det = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(lu(r, col)) > std::abs(lu(pivot, col))) pivot = r;
    }
    if (lu(pivot, col) == 0.0) return 0.0;
    if (pivot != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(lu(pivot, j), lu(col, j));
      det = -det;
    }
    det *= lu(col, col);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = lu(r, col) / lu(col, col);
      for (std::size_t j = col; j < n; ++j) lu(r, j) -= f * lu(col, j);
    }
  }
  return det;
}

}  // namespace probe
