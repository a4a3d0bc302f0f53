#include "probe/numeric.hpp"

#include <cmath>
#include <string>

namespace probe {

double kahan_sum(std::span<const double> xs) {
  double sum = 0.0;
  double carry = 0.0;
  for (double x : xs) {
    const double y = x - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
  return sum;
}

double central_diff(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

DenseMatrix finite_diff_jacobian(const std::function<std::vector<double>(std::span<const double>)>& f,
                                 std::span<const double> x, double h) {
  std::vector<double> probe_point(x.begin(), x.end());
  const std::vector<double> base = f(probe_point);
  DenseMatrix jac(base.size(), x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    probe_point[j] = x[j] + h;
    const std::vector<double> plus = f(probe_point);
    probe_point[j] = x[j] - h;
    const std::vector<double> minus = f(probe_point);
    probe_point[j] = x[j];
    for (std::size_t i = 0; i < base.size(); ++i) {
      const double d = (plus[i] - minus[i]) / (2.0 * h);
      if (!std::isfinite(d)) {
        throw NumericError("finite_diff_jacobian: non-finite output at entry (" +
                           std::to_string(i) + "," + std::to_string(j) + ")");
      }
      jac(i, j) = d;
    }
  }
  return jac;
}

double quadrature(const std::function<double(double)>& g, double a, double b, int n_panels) {
  if (!(a < b)) {
    throw ValidationError("quadrature: requires a < b");
  }
  if (n_panels < 2 || n_panels % 2 != 0) {
    throw ValidationError("quadrature: n_panels must be even and >= 2");
  }
  // One panel is one parabolic segment spanning two subintervals.
  const int n_sub = 2 * n_panels;
  const double h = (b - a) / n_sub;
  std::vector<double> weighted(static_cast<std::size_t>(n_sub) + 1);
  for (int i = 0; i <= n_sub; ++i) {
    const double x = (i == n_sub) ? b : a + h * i;
    const double v = g(x);
    if (!std::isfinite(v)) {
      throw NumericError("quadrature: non-finite integrand at x=" + std::to_string(x));
    }
    const double w = (i == 0 || i == n_sub) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    weighted[static_cast<std::size_t>(i)] = w * v;
  }
  return kahan_sum(weighted) * h / 3.0;
}

}  // namespace probe
