#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "probe/dual.hpp"
#include "probe/errors.hpp"
#include "probe/matrix.hpp"

namespace probe {

/// Default central-difference step (truncation vs roundoff at double precision).
inline constexpr double kFdStep = 1e-5;

/// Compensated (Kahan) summation; order-deterministic and stable enough that
/// reported metrics reproduce to 1e-12 regardless of batch arrangement.
double kahan_sum(std::span<const double> xs);

double central_diff(const std::function<double(double)>& f, double x, double h = kFdStep);

/// Central-difference Jacobian, entry (i,j) = (f_i(x+h e_j) - f_i(x-h e_j)) / 2h.
DenseMatrix finite_diff_jacobian(const std::function<std::vector<double>(std::span<const double>)>& f,
                                 std::span<const double> x, double h = kFdStep);

/// Composite Simpson rule; n_panels must be even and >= 2.
double quadrature(const std::function<double(double)>& g, double a, double b, int n_panels);

/// Evaluates f built from dual primitives and returns (value, df/dx).
template <typename F>
std::pair<double, double> dual_forward(F f, double x) {
  const Dual<double> r = f(dual_seed(x));
  if (!std::isfinite(r.v) || !std::isfinite(r.d)) {
    throw NumericError("dual_forward: non-finite intermediate at x=" + std::to_string(x));
  }
  return {r.v, r.d};
}

/// Second mixed partial d^2 f / da1 da2 via nested duals (exact to
/// primitive precision). Pair with mixed_partial_2d_fd as the cross-check.
template <typename F>
double mixed_partial_2d(F f, double a1, double a2) {
  using DD = Dual<Dual<double>>;
  const DD x1{Dual<double>{a1, 0.0}, Dual<double>{1.0, 0.0}};  // outer channel: d/da1
  const DD x2{Dual<double>{a2, 1.0}, Dual<double>{0.0, 0.0}};  // inner channel: d/da2
  const DD r = f(x1, x2);
  if (!std::isfinite(r.d.d)) {
    throw NumericError("mixed_partial_2d: non-finite intermediate");
  }
  return r.d.d;
}

/// Nested central differences for the same quantity; test oracle for the dual path.
template <typename F>
double mixed_partial_2d_fd(F f, double a1, double a2, double h = 1e-4) {
  const double fpp = f(a1 + h, a2 + h);
  const double fpm = f(a1 + h, a2 - h);
  const double fmp = f(a1 - h, a2 + h);
  const double fmm = f(a1 - h, a2 - h);
  return (fpp - fpm - fmp + fmm) / (4.0 * h * h);
}

}  // namespace probe
