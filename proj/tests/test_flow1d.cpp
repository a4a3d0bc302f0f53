#include <doctest.h>

#include <cmath>

#include "probe/dataset.hpp"
#include "probe/errors.hpp"
#include "probe/flow1d.hpp"
#include "probe/numeric.hpp"
#include "probe/rng.hpp"

using namespace probe;

namespace {

double normal_pdf(double x, double mu = 0.0, double sd = 1.0) {
  const double z = (x - mu) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * M_PI));
}

// Central finite difference of the mean nll with respect to each parameter.
std::vector<double> fd_gradient(MonotoneNet net, std::span<const double> xs, double h = 1e-6) {
  std::vector<double> grad(net.theta.size());
  for (std::size_t i = 0; i < net.theta.size(); ++i) {
    const double keep = net.theta[i];
    net.theta[i] = keep + h;
    const double plus = mean_nll_1d(net, xs);
    net.theta[i] = keep - h;
    const double minus = mean_nll_1d(net, xs);
    net.theta[i] = keep;
    grad[i] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

}  // namespace

TEST_CASE("forward_cdf is strictly monotone at initialization") {
  CounterRng rng(101);
  for (Activation act : {Activation::sigmoid, Activation::tanh, Activation::softplus}) {
    MonotoneNet net = make_monotone_net({16, 16}, act, rng);
    long violations = 0;
    for (int trial = 0; trial < 10000; ++trial) {
      const double x1 = rng.uniform(-8.0, 8.0);
      const double x2 = x1 + rng.uniform(1e-9, 4.0);
      if (forward_cdf(net, x1).y >= forward_cdf(net, x2).y) ++violations;
    }
    CHECK(violations == 0);
  }
}

TEST_CASE("dydx matches the finite-difference oracle at 100 random points") {
  CounterRng rng(102);
  MonotoneNet net = make_monotone_net({16, 16}, Activation::sigmoid, rng);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const double x = rng.uniform(-4.0, 4.0);
    const double fd = central_diff([&](double v) { return forward_cdf(net, v).y; }, x);
    const double dual = forward_cdf(net, x).dydx;
    worst = std::max(worst, std::abs(dual - fd) / std::max(1e-12, std::abs(fd)));
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("skip path saturates the CDF tails") {
  CounterRng rng(103);
  for (int trial = 0; trial < 5; ++trial) {
    MonotoneNet net = make_monotone_net({8}, Activation::sigmoid, rng);
    CHECK(forward_cdf(net, -50.0).y <= 1e-6);
    CHECK(forward_cdf(net, 50.0).y >= 1.0 - 1e-6);
  }
}

TEST_CASE("nll_1d") {
  CounterRng rng(104);
  MonotoneNet net = make_monotone_net({8}, Activation::sigmoid, rng);
  SUBCASE("is exactly -ln(dydx)") {
    for (int trial = 0; trial < 50; ++trial) {
      const double x = rng.uniform(-3.0, 3.0);
      CHECK(nll_1d(net, x) == -std::log(forward_cdf(net, x).dydx));
    }
  }
  SUBCASE("underflow raises a numeric error") {
    MonotoneNet frozen = net;
    frozen.theta[frozen.theta.size() - 2] = 800.0;  // output bias saturates the sigmoid
    CHECK_THROWS_AS(nll_1d(frozen, 0.0), NumericError);
  }
}

TEST_CASE("gradient of the mean nll matches central finite differences") {
  CounterRng rng(105);
  // Width-8, depth-2 net over a small batch.
  for (Activation act : {Activation::sigmoid, Activation::tanh, Activation::softplus}) {
    MonotoneNet net = make_monotone_net({8, 8}, act, rng);
    std::vector<double> xs(40);
    for (double& x : xs) x = rng.normal();
    std::vector<double> grad(net.theta.size());
    nll_gradient_1d(net, xs, grad);
    const std::vector<double> fd = fd_gradient(net, xs);
    double scale = 0.0;
    for (double g : fd) scale = std::max(scale, std::abs(g));
    double worst = 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      worst = std::max(worst, std::abs(grad[i] - fd[i]));
    }
    CHECK(worst / scale <= 1e-4);
  }
}

TEST_CASE("train_1d input validation") {
  TrainConfig cfg;
  cfg.epochs = 5;
  SUBCASE("empty dataset") {
    const Dataset data = make_numeric_dataset({{"x", {}}});
    CHECK_THROWS_AS(train_1d(data, cfg), ValidationError);
  }
  SUBCASE("zero-variance input") {
    const Dataset data = make_numeric_dataset({{"x", {2.0, 2.0, 2.0}}});
    CHECK_THROWS_WITH_AS(train_1d(data, cfg), doctest::Contains("zero-variance"),
                         ValidationError);
  }
}

TEST_CASE("train_1d on standard normal approaches the analytic entropy") {
  CounterRng rng(106);
  std::vector<double> xs(1500);
  for (double& x : xs) x = rng.normal();
  const Dataset data = make_numeric_dataset({{"x", xs}});
  TrainConfig cfg;
  cfg.seed = 2;
  cfg.epochs = 600;
  cfg.loss_tol = 0.0;
  auto [net, report] = train_1d(data, cfg);
  const double entropy = 0.5 * std::log(2.0 * M_PI * std::exp(1.0));  // 1.4189
  CHECK(std::abs(mean_nll_1d(net, xs) - entropy) <= 0.05);
  CHECK(report.clamp_count == 0);
  CHECK(report.all_checks_pass());

  SUBCASE("density grid shape and the fine-grid trapezoid identity") {
    const DensityEstimate1D est = density_grid(net, -8.0, 8.0, 801);
    for (std::size_t i = 0; i + 1 < est.cdf.size(); ++i) CHECK(est.cdf[i] < est.cdf[i + 1]);
    for (double p : est.phi) CHECK(p >= 0.0);
    double trapezoid = 0.0;
    const DensityEstimate1D fine = density_grid(net, -8.0, 8.0, 40001);
    for (std::size_t i = 0; i + 1 < fine.grid.size(); ++i) {
      trapezoid += 0.5 * (fine.phi[i] + fine.phi[i + 1]) * (fine.grid[i + 1] - fine.grid[i]);
    }
    CHECK(std::abs(trapezoid - (fine.cdf.back() - fine.cdf.front())) <= 1e-6);
  }
}

TEST_CASE("density_grid validates its bounds") {
  CounterRng rng(107);
  MonotoneNet net = make_monotone_net({8}, Activation::sigmoid, rng);
  CHECK_THROWS_AS(density_grid(net, 1.0, -1.0, 11), ValidationError);
  CHECK_THROWS_AS(density_grid(net, -1.0, 1.0, 1), ValidationError);
}

TEST_CASE("trained uniform fit has unit mean density on the support") {
  CounterRng rng(108);
  std::vector<double> xs(800);
  for (double& x : xs) x = rng.uniform();
  const Dataset data = make_numeric_dataset({{"x", xs}});
  TrainConfig cfg;
  cfg.seed = 5;
  cfg.epochs = 500;
  cfg.loss_tol = 0.0;
  auto [net, report] = train_1d(data, cfg);
  const DensityEstimate1D est = density_grid(net, 0.0, 1.0, 101);
  const double mean_phi = kahan_sum(est.phi) / static_cast<double>(est.phi.size());
  CHECK(mean_phi == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("checkpoint round trip reproduces the density exactly") {
  CounterRng rng(109);
  MonotoneNet net = make_monotone_net({16, 16}, Activation::tanh, rng);
  net.standardize_mean = 0.37;
  net.standardize_std = 2.25;
  const MonotoneNet back = monotone_net_from_json(monotone_net_to_json(net));
  for (int i = 0; i < 50; ++i) {
    const double x = rng.uniform(-6.0, 6.0);
    CHECK(forward_cdf(back, x).y == forward_cdf(net, x).y);
    CHECK(forward_cdf(back, x).dydx == forward_cdf(net, x).dydx);
  }
}

TEST_CASE("sampling round trip: refit of inverse-CDF samples stays close") {
  CounterRng rng(110);
  std::vector<double> xs(1200);
  for (double& x : xs) x = 0.6 * rng.normal() + (rng.uniform() < 0.5 ? -1.2 : 1.2);
  const Dataset data = make_numeric_dataset({{"x", xs}});
  TrainConfig cfg;
  cfg.seed = 7;
  cfg.epochs = 500;
  cfg.loss_tol = 0.0;
  auto [net, report] = train_1d(data, cfg);

  std::vector<double> resampled(xs.size());
  for (double& x : resampled) x = sample_inverse_cdf(net, rng.uniform_open());
  auto [net2, report2] = train_1d(make_numeric_dataset({{"x", resampled}}), cfg);

  const auto mixture_pdf = [](double x) {
    return 0.5 * (normal_pdf(x, -1.2, 0.6) + normal_pdf(x, 1.2, 0.6));
  };
  double l1_first = 0.0, l1_second = 0.0;
  const int points = 401;
  for (int i = 0; i < points - 1; ++i) {
    const double x0 = -5.0 + 10.0 * i / (points - 1);
    const double x1 = -5.0 + 10.0 * (i + 1) / (points - 1);
    const double h = x1 - x0;
    l1_first += 0.5 * h * (std::abs(forward_cdf(net, x0).dydx - mixture_pdf(x0)) +
                           std::abs(forward_cdf(net, x1).dydx - mixture_pdf(x1)));
    l1_second += 0.5 * h * (std::abs(forward_cdf(net2, x0).dydx - mixture_pdf(x0)) +
                            std::abs(forward_cdf(net2, x1).dydx - mixture_pdf(x1)));
  }
  CHECK(l1_second <= 2.0 * l1_first + 0.02);
}
