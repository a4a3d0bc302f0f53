#include <doctest.h>

#include <cmath>

#include "probe/dual.hpp"
#include "probe/errors.hpp"
#include "probe/matrix.hpp"
#include "probe/numeric.hpp"
#include "probe/optim.hpp"
#include "probe/rng.hpp"

using namespace probe;

TEST_CASE("dual_forward on the primitive set") {
  SUBCASE("identity") {
    auto [v, d] = dual_forward([](Dual<double> x) { return x; }, 3.0);
    CHECK(v == 3.0);
    CHECK(d == 1.0);
  }
  SUBCASE("sigmoid at zero") {
    auto [v, d] = dual_forward([](Dual<double> x) { return sigmoid(x); }, 0.0);
    CHECK(v == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(d == doctest::Approx(0.25).epsilon(1e-14));
  }
  SUBCASE("chain rule on exp(2x)") {
    auto [v, d] = dual_forward([](Dual<double> x) { return exp(2.0 * x); }, 1.0);
    CHECK(v == doctest::Approx(std::exp(2.0)).epsilon(1e-14));
    CHECK(d == doctest::Approx(2.0 * std::exp(2.0)).epsilon(1e-14));
  }
}

TEST_CASE("dual derivatives match central differences on random compositions") {
  CounterRng rng(42);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int> ops(1 + rng.uniform_int(6));
    for (int& op : ops) op = static_cast<int>(rng.uniform_int(6));
    std::vector<double> mults(ops.size());
    for (double& m : mults) m = rng.uniform(0.3, 1.5);
    const auto f = [&](auto x) {
      using std::exp;
      using std::log;
      using std::tanh;
      auto y = x;
      for (std::size_t i = 0; i < ops.size(); ++i) {
        switch (ops[i]) {
          case 0: y = sigmoid(mults[i] * y); break;
          case 1: y = tanh(mults[i] * y); break;
          case 2: y = softplus(mults[i] * y); break;
          case 3: y = exp(-0.4 * (y * y)); break;
          case 4: y = log(softplus(y) + 0.5); break;
          default: y = mults[i] * y + 0.25 * (y * y); break;
        }
      }
      return y;
    };
    const double x = rng.uniform(-1.5, 1.5);
    const auto [v, d] = dual_forward([&](Dual<double> t) { return f(t); }, x);
    (void)v;
    const double fd = central_diff([&](double t) { return f(t); }, x);
    worst = std::max(worst, std::abs(d - fd) / std::max(1e-6, std::abs(fd)));
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("finite_diff_jacobian") {
  SUBCASE("recovers a linear map") {
    const auto f = [](std::span<const double> x) {
      return std::vector<double>{2.0 * x[0] - x[1], 0.5 * x[0] + 3.0 * x[1]};
    };
    const std::vector<double> x = {0.3, -0.7};
    const DenseMatrix j = finite_diff_jacobian(f, x);
    CHECK(j(0, 0) == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(j(0, 1) == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(j(1, 0) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(j(1, 1) == doctest::Approx(3.0).epsilon(1e-9));
  }
  SUBCASE("componentwise square") {
    const auto f = [](std::span<const double> x) {
      return std::vector<double>{x[0] * x[0], x[1] * x[1]};
    };
    const std::vector<double> x = {1.0, 2.0};
    const DenseMatrix j = finite_diff_jacobian(f, x);
    CHECK(j(0, 0) == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(j(1, 1) == doctest::Approx(4.0).epsilon(1e-8));
    CHECK(std::abs(j(0, 1)) < 1e-10);
    CHECK(std::abs(j(1, 0)) < 1e-10);
  }
}

TEST_CASE("quadrature") {
  SUBCASE("constant integrand") {
    CHECK(quadrature([](double) { return 1.0; }, 0.0, 1.0, 2) == doctest::Approx(1.0));
  }
  SUBCASE("standard normal mass via erf oracle") {
    const auto pdf = [](double x) {
      return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    };
    const double expected = std::erf(8.0 / std::sqrt(2.0));  // mass on [-8, 8]
    CHECK(quadrature(pdf, -8.0, 8.0, 1024) == doctest::Approx(expected).epsilon(1e-10));
  }
  SUBCASE("sin over a half period") {
    CHECK(quadrature([](double x) { return std::sin(x); }, 0.0, M_PI, 64) ==
          doctest::Approx(2.0).epsilon(1e-8));
  }
  SUBCASE("convergence order at least 4") {
    const auto g = [](double x) { return std::exp(x) * std::cos(3.0 * x); };
    const double exact =
        (std::exp(1.0) * (std::cos(3.0) + 3.0 * std::sin(3.0)) - 1.0) / 10.0;
    const double e1 = std::abs(quadrature(g, 0.0, 1.0, 8) - exact);
    const double e2 = std::abs(quadrature(g, 0.0, 1.0, 16) - exact);
    CHECK(std::log2(e1 / e2) >= 3.8);
  }
  SUBCASE("precondition violations") {
    CHECK_THROWS_AS(quadrature([](double) { return 1.0; }, 1.0, 0.0, 4), ValidationError);
    CHECK_THROWS_AS(quadrature([](double) { return 1.0; }, 0.0, 1.0, 3), ValidationError);
  }
}

TEST_CASE("mixed_partial_2d via nested duals") {
  SUBCASE("bilinear product") {
    const double m = mixed_partial_2d(
        [](auto a, auto b) { return a * b; }, 0.7, -1.3);
    CHECK(m == doctest::Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("sigmoid of the sum at the origin") {
    const double m = mixed_partial_2d(
        [](auto a, auto b) { return sigmoid(a + b); }, 0.0, 0.0);
    CHECK(m == doctest::Approx(0.0).epsilon(1e-14));
  }
  SUBCASE("exp(a*b) at (1,1): hand-derived 2e") {
    const double m = mixed_partial_2d([](auto a, auto b) { return exp(a * b); }, 1.0, 1.0);
    CHECK(m == doctest::Approx(2.0 * std::exp(1.0)).epsilon(1e-12));
  }
  SUBCASE("agrees with the nested central-difference cross-check") {
    const auto f_dual = [](auto a, auto b) { return sigmoid(a * b + 0.3 * a) * softplus(b); };
    const double dual_val = mixed_partial_2d(f_dual, 0.6, -0.4);
    const double fd_val = mixed_partial_2d_fd(
        [&](double a, double b) {
          return sigmoid(a * b + 0.3 * a) * softplus(b);
        },
        0.6, -0.4);
    CHECK(dual_val == doctest::Approx(fd_val).epsilon(1e-5));
  }
}

TEST_CASE("matrix_exp") {
  SUBCASE("exp(0) = I") {
    const DenseMatrix e = matrix_exp(DenseMatrix(3, 3), 1.0);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) CHECK(e(i, j) == doctest::Approx(i == j ? 1.0 : 0.0));
    }
  }
  SUBCASE("nilpotent series terminates") {
    DenseMatrix a(2, 2);
    a(0, 1) = 1.0;
    const DenseMatrix e = matrix_exp(a, 1.0);
    CHECK(e(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(e(0, 1) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(e(1, 0) == doctest::Approx(0.0));
    CHECK(e(1, 1) == doctest::Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("det exp = exp tr for zero-trace matrices") {
    CounterRng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 2 + rng.uniform_int(4);
      DenseMatrix a(n, n);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (i != j) a(i, j) = rng.normal();
        }
      }
      const double t = rng.uniform(0.2, 1.5);
      CHECK(std::abs(determinant(matrix_exp(a, t)) - 1.0) <= 1e-8);
    }
  }
  SUBCASE("self-consistency under halving") {
    CounterRng rng(9);
    DenseMatrix a(4, 4);
    for (double& e : a.entries()) e = 0.5 * rng.normal();
    const DenseMatrix whole = matrix_exp(a, 1.0);
    const DenseMatrix half = matrix_exp(a, 0.5);
    const DenseMatrix squared = half * half;
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(std::abs(whole.entries()[i] - squared.entries()[i]) <= 1e-10);
    }
  }
  SUBCASE("semigroup property on random 4x4") {
    CounterRng rng(11);
    for (int trial = 0; trial < 30; ++trial) {
      DenseMatrix a(4, 4);
      for (double& e : a.entries()) e = 0.4 * rng.normal();
      const double s = rng.uniform(0.1, 1.2);
      const double t = rng.uniform(0.1, 1.2);
      const DenseMatrix lhs = matrix_exp(a, s + t);
      const DenseMatrix rhs = matrix_exp(a, s) * matrix_exp(a, t);
      for (std::size_t i = 0; i < 16; ++i) {
        CHECK(std::abs(lhs.entries()[i] - rhs.entries()[i]) <= 1e-9);
      }
    }
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(matrix_exp(DenseMatrix(2, 3), 1.0), ValidationError);
  }
}

TEST_CASE("sgd_step") {
  SUBCASE("zero gradient is a fixed point") {
    std::vector<double> params = {1.0, -2.0};
    const std::vector<double> grads = {0.0, 0.0};
    OptimizerState state = make_optimizer("sgd", 0.1);
    sgd_step(params, grads, state);
    CHECK(params[0] == 1.0);
    CHECK(params[1] == -2.0);
  }
  SUBCASE("plain mode decreases by lr*grad") {
    std::vector<double> params = {0.0};
    const std::vector<double> grads = {1.0};
    OptimizerState state = make_optimizer("sgd", 0.1);
    sgd_step(params, grads, state);
    CHECK(params[0] == doctest::Approx(-0.1));
  }
  SUBCASE("quadratic bowl contraction") {
    std::vector<double> params = {1.0};
    OptimizerState state = make_optimizer("sgd", 0.1);
    for (int i = 0; i < 100; ++i) {
      const std::vector<double> grads = {2.0 * params[0]};
      sgd_step(params, grads, state);
    }
    CHECK(std::abs(params[0]) < 1e-4);
  }
  SUBCASE("shape mismatch and non-finite gradients") {
    std::vector<double> params = {0.0};
    OptimizerState state = make_optimizer("sgd", 0.1);
    const std::vector<double> bad_shape = {1.0, 2.0};
    CHECK_THROWS_AS(sgd_step(params, bad_shape, state), ValidationError);
    const std::vector<double> bad_value = {std::nan("")};
    CHECK_THROWS_AS(sgd_step(params, bad_value, state), NumericError);
  }
}

TEST_CASE("kahan_sum is order-robust") {
  CounterRng rng(5);
  std::vector<double> xs(5000);
  for (double& x : xs) x = rng.uniform(-1.0, 1.0) * std::exp(rng.uniform(0.0, 8.0));
  const double fwd = kahan_sum(xs);
  std::vector<double> rev(xs.rbegin(), xs.rend());
  CHECK(std::abs(fwd - kahan_sum(rev)) <= 1e-9 * std::abs(fwd) + 1e-12);
}
