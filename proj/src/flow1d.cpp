#include "probe/flow1d.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "probe/dual.hpp"
#include "probe/errors.hpp"
#include "probe/numeric.hpp"
#include "probe/optim.hpp"

namespace probe {

namespace {

constexpr double kPosFloor = 1e-6;    // keeps effective weights strictly positive
constexpr double kTiny = 1e-300;      // density underflow threshold

double positive_weight(double free) { return softplus(free) + kPosFloor; }

double softplus_inv(double y) { return std::log(std::expm1(y)); }

}  // namespace

Activation activation_from_tag(const std::string& tag) {
  if (tag == "sigmoid") return Activation::sigmoid;
  if (tag == "tanh") return Activation::tanh;
  if (tag == "softplus") return Activation::softplus;
  throw ValidationError("unknown activation tag: " + tag);
}

std::string activation_tag(Activation a) {
  switch (a) {
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
    case Activation::softplus: return "softplus";
  }
  return "sigmoid";
}

ActEval eval_activation(Activation a, double u) {
  switch (a) {
    case Activation::sigmoid: {
      const double s = sigmoid(u);
      const double d1 = s * (1.0 - s);
      return {s, d1, d1 * (1.0 - 2.0 * s)};
    }
    case Activation::tanh: {
      const double t = std::tanh(u);
      const double d1 = 1.0 - t * t;
      return {t, d1, -2.0 * t * d1};
    }
    case Activation::softplus: {
      const double s = sigmoid(u);
      return {softplus(u), s, s * (1.0 - s)};
    }
  }
  return {0.0, 0.0, 0.0};
}

std::size_t MonotoneNet::n_params() const {
  std::size_t n = 0;
  for (std::size_t l = 1; l + 1 < widths.size(); ++l) {
    n += static_cast<std::size_t>(widths[l]) * widths[l - 1] + widths[l];
  }
  n += static_cast<std::size_t>(widths[widths.size() - 2]);  // output weights
  n += 2;                                                    // output bias + skip gain
  return n;
}

MonotoneNet make_monotone_net(const std::vector<int>& hidden_widths, Activation activation,
                              CounterRng& rng) {
  MonotoneNet net;
  net.widths.push_back(1);
  for (int w : hidden_widths) {
    if (w < 1) throw ValidationError("monotone net: hidden width must be >= 1");
    net.widths.push_back(w);
  }
  net.widths.push_back(1);
  net.activation = activation;
  net.theta.resize(net.n_params());

  std::size_t k = 0;
  for (std::size_t l = 1; l + 1 < net.widths.size(); ++l) {
    const int rows = net.widths[l];
    const int cols = net.widths[l - 1];
    const double target = 1.0 / static_cast<double>(cols);
    const double center = softplus_inv(target);
    for (int i = 0; i < rows * cols; ++i) net.theta[k++] = center + 0.3 * rng.normal();
    const bool first = (l == 1);
    for (int i = 0; i < rows; ++i) {
      net.theta[k++] = first ? rng.uniform(-2.5, 2.5) : rng.uniform(-0.5, 0.5);
    }
  }
  const int last_hidden = net.widths[net.widths.size() - 2];
  const double out_center = softplus_inv(0.5 / static_cast<double>(last_hidden));
  for (int i = 0; i < last_hidden; ++i) net.theta[k++] = out_center + 0.3 * rng.normal();
  net.theta[k++] = 0.0;                  // output bias
  net.theta[k++] = softplus_inv(1.0);    // skip gain: unit slope at init
  return net;
}

namespace {

// Dual-channel forward state: value h and input-derivative hdot per layer.
struct Flow1dWork {
  std::vector<std::vector<double>> u, udot, h, hdot;
  std::vector<std::vector<double>> hadj, hdadj;  // backprop scratch
  std::vector<std::vector<double>> weights;      // effective weights per layer (materialized)
  std::vector<double> out_weights;
  double out_bias = 0.0, skip = 0.0;
  double p = 0.0, pdot = 0.0, y = 0.0;
};

void materialize(const MonotoneNet& net, Flow1dWork& work) {
  const std::size_t layers = net.widths.size() - 2;  // hidden layers
  work.u.resize(layers);
  work.udot.resize(layers);
  work.h.resize(layers);
  work.hdot.resize(layers);
  work.hadj.resize(layers);
  work.hdadj.resize(layers);
  work.weights.resize(layers);
  std::size_t k = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const int rows = net.widths[l + 1];
    const int cols = net.widths[l];
    work.weights[l].resize(static_cast<std::size_t>(rows) * cols);
    for (int i = 0; i < rows * cols; ++i) {
      work.weights[l][static_cast<std::size_t>(i)] = positive_weight(net.theta[k + i]);
    }
    k += static_cast<std::size_t>(rows) * cols + rows;  // skip biases, read on demand
    work.u[l].resize(static_cast<std::size_t>(rows));
    work.udot[l].resize(static_cast<std::size_t>(rows));
    work.h[l].resize(static_cast<std::size_t>(rows));
    work.hdot[l].resize(static_cast<std::size_t>(rows));
    work.hadj[l].resize(static_cast<std::size_t>(rows));
    work.hdadj[l].resize(static_cast<std::size_t>(rows));
  }
  const int last_hidden = net.widths[net.widths.size() - 2];
  work.out_weights.resize(static_cast<std::size_t>(last_hidden));
  for (int i = 0; i < last_hidden; ++i) {
    work.out_weights[static_cast<std::size_t>(i)] = positive_weight(net.theta[k + i]);
  }
  work.out_bias = net.theta[k + last_hidden];
  work.skip = positive_weight(net.theta[k + last_hidden + 1]);
}

// z-space forward pass with both channels; returns (y, dy/dz).
void forward_channels(const MonotoneNet& net, double z, Flow1dWork& work) {
  const std::size_t layers = net.widths.size() - 2;
  std::size_t k = 0;
  const double* theta = net.theta.data();
  double in_scalar = z;
  for (std::size_t l = 0; l < layers; ++l) {
    const int rows = net.widths[l + 1];
    const int cols = net.widths[l];
    const double* bias = theta + k + static_cast<std::size_t>(rows) * cols;
    for (int i = 0; i < rows; ++i) {
      double acc = bias[i];
      double accdot = 0.0;
      const double* wrow = work.weights[l].data() + static_cast<std::size_t>(i) * cols;
      if (l == 0) {
        acc += wrow[0] * in_scalar;
        accdot += wrow[0];
      } else {
        const std::vector<double>& hp = work.h[l - 1];
        const std::vector<double>& hpd = work.hdot[l - 1];
        for (int j = 0; j < cols; ++j) {
          acc += wrow[j] * hp[static_cast<std::size_t>(j)];
          accdot += wrow[j] * hpd[static_cast<std::size_t>(j)];
        }
      }
      const ActEval act = eval_activation(net.activation, acc);
      work.u[l][static_cast<std::size_t>(i)] = acc;
      work.udot[l][static_cast<std::size_t>(i)] = accdot;
      work.h[l][static_cast<std::size_t>(i)] = act.f;
      work.hdot[l][static_cast<std::size_t>(i)] = act.d1 * accdot;
    }
    k += static_cast<std::size_t>(rows) * cols + rows;
  }
  double p = work.out_bias + work.skip * z;
  double pdot = work.skip;
  const std::vector<double>& hl = work.h[layers - 1];
  const std::vector<double>& hld = work.hdot[layers - 1];
  for (std::size_t i = 0; i < work.out_weights.size(); ++i) {
    p += work.out_weights[i] * hl[i];
    pdot += work.out_weights[i] * hld[i];
  }
  work.p = p;
  work.pdot = pdot;
  work.y = sigmoid(p);
}

// Backprop of loss = -ln sigma'(p) - ln pdot through both channels.
// grad is indexed like theta; clamped pdot values are treated as constants.
void backward_channels(const MonotoneNet& net, double z, Flow1dWork& work,
                       std::span<double> grad, double weight) {
  const std::size_t layers = net.widths.size() - 2;
  const double padj = weight * (2.0 * work.y - 1.0);
  const double pdadj = weight * (-1.0 / std::max(work.pdot, kTiny));

  const std::size_t out_off = net.theta.size() - work.out_weights.size() - 2;
  const std::vector<double>& hl = work.h[layers - 1];
  const std::vector<double>& hld = work.hdot[layers - 1];
  for (std::size_t i = 0; i < work.out_weights.size(); ++i) {
    const double graw = padj * hl[i] + pdadj * hld[i];
    grad[out_off + i] += graw * sigmoid(net.theta[out_off + i]);
    work.hadj[layers - 1][i] = padj * work.out_weights[i];
    work.hdadj[layers - 1][i] = pdadj * work.out_weights[i];
  }
  grad[out_off + work.out_weights.size()] += padj;  // output bias
  const std::size_t skip_off = out_off + work.out_weights.size() + 1;
  grad[skip_off] += (padj * z + pdadj) * sigmoid(net.theta[skip_off]);

  std::size_t k_end = out_off;
  for (std::size_t l = layers; l-- > 0;) {
    const int rows = net.widths[l + 1];
    const int cols = net.widths[l];
    const std::size_t k = k_end - (static_cast<std::size_t>(rows) * cols + rows);
    if (l > 0) {
      std::fill(work.hadj[l - 1].begin(), work.hadj[l - 1].end(), 0.0);
      std::fill(work.hdadj[l - 1].begin(), work.hdadj[l - 1].end(), 0.0);
    }
    for (int i = 0; i < rows; ++i) {
      const std::size_t si = static_cast<std::size_t>(i);
      const ActEval act = eval_activation(net.activation, work.u[l][si]);
      const double uadj = act.d1 * work.hadj[l][si] + act.d2 * work.udot[l][si] * work.hdadj[l][si];
      const double udadj = act.d1 * work.hdadj[l][si];
      const double* wrow = work.weights[l].data() + si * static_cast<std::size_t>(cols);
      for (int j = 0; j < cols; ++j) {
        const std::size_t sj = static_cast<std::size_t>(j);
        const double hprev = (l == 0) ? z : work.h[l - 1][sj];
        const double hprevdot = (l == 0) ? 1.0 : work.hdot[l - 1][sj];
        const double graw = uadj * hprev + udadj * hprevdot;
        const std::size_t widx = k + si * static_cast<std::size_t>(cols) + sj;
        grad[widx] += graw * sigmoid(net.theta[widx]);
        if (l > 0) {
          work.hadj[l - 1][sj] += uadj * wrow[j];
          work.hdadj[l - 1][sj] += udadj * wrow[j];
        }
      }
      grad[k + static_cast<std::size_t>(rows) * cols + si] += uadj;
    }
    k_end = k;
  }
}

}  // namespace

Forward1d forward_cdf(const MonotoneNet& net, double x) {
  if (!std::isfinite(x)) {
    throw ValidationError("forward_cdf: non-finite input");
  }
  thread_local Flow1dWork work;
  materialize(net, work);
  const double z = (x - net.standardize_mean) / net.standardize_std;
  forward_channels(net, z, work);
  const double dydx = sigmoid(work.p) * (1.0 - sigmoid(work.p)) * work.pdot / net.standardize_std;
  if (!std::isfinite(work.y) || !std::isfinite(dydx)) {
    throw NumericError("forward_cdf: non-finite intermediate at x=" + std::to_string(x));
  }
  return {work.y, dydx};
}

double nll_1d(const MonotoneNet& net, double x) {
  const Forward1d f = forward_cdf(net, x);
  if (f.dydx <= kTiny) {
    throw NumericError("nll_1d: density underflow at x=" + std::to_string(x));
  }
  return -std::log(f.dydx);
}

double mean_nll_1d(const MonotoneNet& net, std::span<const double> xs) {
  std::vector<double> losses(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) losses[i] = nll_1d(net, xs[i]);
  return kahan_sum(losses) / static_cast<double>(xs.size());
}

double nll_gradient_1d(const MonotoneNet& net, std::span<const double> xs, std::span<double> grad,
                       long* clamp_count) {
  thread_local Flow1dWork work;
  materialize(net, work);
  std::fill(grad.begin(), grad.end(), 0.0);
  std::vector<double> losses(xs.size());
  const double inv_n = 1.0 / static_cast<double>(xs.size());
  for (std::size_t s = 0; s < xs.size(); ++s) {
    const double z = (xs[s] - net.standardize_mean) / net.standardize_std;
    forward_channels(net, z, work);
    const double sig_d = sigmoid(work.p) * (1.0 - sigmoid(work.p));
    double dydz = sig_d * work.pdot;
    if (dydz <= kTiny) {
      if (clamp_count != nullptr) ++(*clamp_count);
      dydz = kTiny;
    }
    losses[s] = -std::log(dydz) + std::log(net.standardize_std);
    backward_channels(net, z, work, grad, inv_n);
  }
  return kahan_sum(losses) * inv_n;
}

DensityEstimate1D density_grid(const MonotoneNet& net, double x_min, double x_max, int n_points) {
  if (!(x_min < x_max)) {
    throw ValidationError("density_grid: requires x_min < x_max");
  }
  if (n_points < 2) {
    throw ValidationError("density_grid: requires n_points >= 2");
  }
  DensityEstimate1D est;
  est.grid.resize(static_cast<std::size_t>(n_points));
  est.phi.resize(static_cast<std::size_t>(n_points));
  est.cdf.resize(static_cast<std::size_t>(n_points));
  const double h = (x_max - x_min) / (n_points - 1);
  for (int i = 0; i < n_points; ++i) {
    const double x = (i == n_points - 1) ? x_max : x_min + h * i;
    const Forward1d f = forward_cdf(net, x);
    est.grid[static_cast<std::size_t>(i)] = x;
    est.phi[static_cast<std::size_t>(i)] = f.dydx;
    est.cdf[static_cast<std::size_t>(i)] = f.y;
  }
  return est;
}

double sample_inverse_cdf(const MonotoneNet& net, double u) {
  if (!(u > 0.0 && u < 1.0)) {
    throw ValidationError("sample_inverse_cdf: u must lie in (0,1)");
  }
  double lo = net.standardize_mean - 20.0 * net.standardize_std;
  double hi = net.standardize_mean + 20.0 * net.standardize_std;
  while (forward_cdf(net, lo).y > u) lo -= 20.0 * net.standardize_std;
  while (forward_cdf(net, hi).y < u) hi += 20.0 * net.standardize_std;
  for (int it = 0; it < 200 && hi - lo > 1e-13 * (1.0 + std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (forward_cdf(net, mid).y < u ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::pair<MonotoneNet, RunReport> train_1d(const Dataset& data, const TrainConfig& config,
                                           const std::string& column) {
  const auto t0 = std::chrono::steady_clock::now();
  std::string col_name = column;
  if (col_name.empty()) {
    const std::vector<std::string> numeric = data.numeric_column_names();
    if (numeric.empty()) throw ValidationError("train_1d: no numeric column in dataset");
    col_name = numeric.front();
  }
  const std::vector<double>& xs = data.column(col_name).values;
  if (xs.empty()) {
    throw ValidationError("train_1d: empty dataset");
  }
  const double mean = kahan_sum(xs) / static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  if (var <= 0.0) {
    throw ValidationError("train_1d: zero-variance input");
  }

  CounterRng rng(config.seed);
  MonotoneNet net =
      make_monotone_net(config.hidden_widths, activation_from_tag(config.activation), rng);
  net.standardize_mean = mean;
  net.standardize_std = std::sqrt(var);

  RunReport report;
  report.mode = "global";
  report.config_echo = config.to_json();

  OptimizerState opt = make_optimizer(config.optimizer, config.learning_rate);
  std::vector<double> grad(net.theta.size());
  std::vector<std::size_t> order(xs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> batch;
  double prev_loss = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    if (config.batch_size <= 0 || static_cast<std::size_t>(config.batch_size) >= xs.size()) {
      epoch_loss = nll_gradient_1d(net, xs, grad, &report.clamp_count);
      sgd_step(net.theta, grad, opt);
    } else {
      // Deterministic shuffle, then fixed-order minibatches.
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.uniform_int(i)]);
      }
      std::vector<double> losses;
      const std::size_t bs = static_cast<std::size_t>(config.batch_size);
      for (std::size_t start = 0; start < xs.size(); start += bs) {
        batch.clear();
        for (std::size_t i = start; i < std::min(start + bs, xs.size()); ++i) {
          batch.push_back(xs[order[i]]);
        }
        const double loss = nll_gradient_1d(net, batch, grad, &report.clamp_count);
        losses.push_back(loss * static_cast<double>(batch.size()));
        sgd_step(net.theta, grad, opt);
      }
      epoch_loss = kahan_sum(losses) / static_cast<double>(xs.size());
    }
    if (!std::isfinite(epoch_loss)) {
      throw NumericError("train_1d: non-finite loss at epoch " + std::to_string(epoch));
    }
    report.epoch_losses.push_back(epoch_loss);
    if (std::abs(prev_loss - epoch_loss) < config.loss_tol) break;
    prev_loss = epoch_loss;
  }

  // Final verification: structural mass over mu +- 10 sigma, and the
  // fundamental-theorem-of-calculus agreement between CDF difference and
  // quadrature of the density.
  const double lo = mean - 10.0 * net.standardize_std;
  const double hi = mean + 10.0 * net.standardize_std;
  const double mass = forward_cdf(net, hi).y - forward_cdf(net, lo).y;
  const double quad =
      quadrature([&](double x) { return forward_cdf(net, x).dydx; }, lo, hi, 4096);
  report.final_checks.push_back(
      {"normalization_mass_10sigma", "cdf_difference", mass, 0.01, mass >= 0.99 && mass <= 1.0});
  report.final_checks.push_back({"ftc_quadrature_agreement", "abs_difference",
                                 std::abs(quad - mass), 1e-6, std::abs(quad - mass) <= 1e-6});
  report.final_checks.push_back({"underflow_clamps", "count",
                                 static_cast<double>(report.clamp_count), 0.0,
                                 report.clamp_count == 0});
  report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                       .count();
  return {std::move(net), std::move(report)};
}

nlohmann::json monotone_net_to_json(const MonotoneNet& net) {
  std::vector<double> free_weights;
  std::vector<double> biases;
  std::size_t k = 0;
  for (std::size_t l = 1; l + 1 < net.widths.size(); ++l) {
    const int rows = net.widths[l];
    const int cols = net.widths[l - 1];
    for (int i = 0; i < rows * cols; ++i) free_weights.push_back(net.theta[k++]);
    for (int i = 0; i < rows; ++i) biases.push_back(net.theta[k++]);
  }
  const int last_hidden = net.widths[net.widths.size() - 2];
  for (int i = 0; i < last_hidden; ++i) free_weights.push_back(net.theta[k++]);
  biases.push_back(net.theta[k++]);
  const double skip = net.theta[k++];
  return nlohmann::json{
      {"widths", net.widths},
      {"free_weights", free_weights},
      {"biases", biases},
      {"activation", activation_tag(net.activation)},
      {"skip_gain", skip},
      {"standardize", {{"mean", net.standardize_mean}, {"std", net.standardize_std}}}};
}

MonotoneNet monotone_net_from_json(const nlohmann::json& j) {
  MonotoneNet net;
  net.widths = j.at("widths").get<std::vector<int>>();
  net.activation = activation_from_tag(j.at("activation").get<std::string>());
  net.standardize_mean = j.at("standardize").at("mean").get<double>();
  net.standardize_std = j.at("standardize").at("std").get<double>();
  const auto free_weights = j.at("free_weights").get<std::vector<double>>();
  const auto biases = j.at("biases").get<std::vector<double>>();
  net.theta.resize(net.n_params());
  std::size_t k = 0, wi = 0, bi = 0;
  for (std::size_t l = 1; l + 1 < net.widths.size(); ++l) {
    const int rows = net.widths[l];
    const int cols = net.widths[l - 1];
    for (int i = 0; i < rows * cols; ++i) net.theta[k++] = free_weights.at(wi++);
    for (int i = 0; i < rows; ++i) net.theta[k++] = biases.at(bi++);
  }
  const int last_hidden = net.widths[net.widths.size() - 2];
  for (int i = 0; i < last_hidden; ++i) net.theta[k++] = free_weights.at(wi++);
  net.theta[k++] = biases.at(bi++);
  net.theta[k++] = j.at("skip_gain").get<double>();
  return net;
}

}  // namespace probe
