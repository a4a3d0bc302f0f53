#include "probe/flownd.hpp"

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

constexpr double kPosFloor = 1e-6;
constexpr double kTiny = 1e-300;

double positive_weight(double free) { return softplus(free) + kPosFloor; }
double softplus_inv(double y) { return std::log(std::expm1(y)); }

std::size_t tri_row_offset(int j) { return static_cast<std::size_t>(j) * (j - 1) / 2; }

struct NdWork {
  std::vector<std::vector<double>> c;    // c[0]=standardized input, c[m+1]=map m output
  std::vector<std::vector<double>> pre;  // preactivation per map
  std::vector<double> cadj, preadj;
};

// Shared forward pass. Fills work and the diag table; returns the nll as the
// row-major sum of -ln(diag) so every caller shares the same arithmetic.
double forward_store(const TriangularFlow& net, std::span<const double> a,
                     std::span<const double> shifts, NdWork& work, DenseMatrix* diag_out) {
  const std::size_t n = static_cast<std::size_t>(net.n);
  if (a.size() != n) {
    throw ValidationError("forward_flow: input dimension mismatch");
  }
  const std::size_t maps = net.n_maps();
  work.c.resize(maps + 1);
  work.pre.resize(maps);
  work.c[0].resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    if (!std::isfinite(a[j])) {
      throw ValidationError("forward_flow: non-finite input");
    }
    work.c[0][j] = (a[j] - net.std_mean[j]) / net.std_std[j];
  }
  double nll = 0.0;
  for (std::size_t m = 0; m < maps; ++m) {
    const bool final_map = (m + 1 == maps);
    const std::size_t off = net.map_offset(m);
    const double* tri = net.theta.data() + off;
    const double* diag_free = tri + n * (n - 1) / 2;
    const double* bias = diag_free + n;
    const std::vector<double>& cin = work.c[m];
    work.pre[m].resize(n);
    work.c[m + 1].resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double dj = positive_weight(diag_free[j]);
      double acc = bias[j] + dj * cin[j];
      const double* trow = tri + tri_row_offset(static_cast<int>(j));
      for (std::size_t k = 0; k < j; ++k) acc += trow[k] * cin[k];
      if (!shifts.empty()) acc += shifts[m * n + j];
      work.pre[m][j] = acc;
      const double s = sigmoid(acc);
      const double sd = s * (1.0 - s);
      double diag;
      if (final_map) {
        work.c[m + 1][j] = s;
        diag = sd * dj;
      } else {
        work.c[m + 1][j] = s - 0.5 + net.leak * acc;
        diag = (sd + net.leak) * dj;
      }
      if (m == 0) diag /= net.std_std[j];
      if (diag_out != nullptr) (*diag_out)(m, j) = diag;
      nll -= std::log(std::max(diag, kTiny));
    }
  }
  if (!std::isfinite(nll)) {
    throw NumericError("forward_flow: non-finite intermediate");
  }
  return nll;
}

// Backprop of the per-sample nll. When local is set, each map's parameters
// see only its own localized terms and no adjoint crosses map boundaries.
void backward_store(const TriangularFlow& net, NdWork& work, std::span<double> grad,
                    std::span<double> shift_adj, double weight, bool local) {
  const std::size_t n = static_cast<std::size_t>(net.n);
  const std::size_t maps = net.n_maps();
  work.cadj.assign(n, 0.0);
  work.preadj.assign(n, 0.0);
  for (std::size_t m = maps; m-- > 0;) {
    const bool final_map = (m + 1 == maps);
    const std::size_t off = net.map_offset(m);
    const double* tri = net.theta.data() + off;
    const double* diag_free = tri + n * (n - 1) / 2;
    double* gtri = grad.data() + off;
    double* gdiag = gtri + n * (n - 1) / 2;
    double* gbias = gdiag + n;
    const std::vector<double>& cin = work.c[m];
    for (std::size_t j = 0; j < n; ++j) {
      const double s = sigmoid(work.pre[m][j]);
      const double sd = s * (1.0 - s);
      const double sdd = sd * (1.0 - 2.0 * s);
      const double dj = positive_weight(diag_free[j]);
      double padj;
      if (final_map) {
        padj = weight * (2.0 * s - 1.0);  // -sigma''/sigma'
        if (!local) padj += work.cadj[j] * sd;
      } else {
        padj = weight * (-sdd / (sd + net.leak));
        if (!local) padj += work.cadj[j] * (sd + net.leak);
      }
      work.preadj[j] = padj;
      gdiag[j] += (padj * cin[j] - weight / dj) * sigmoid(diag_free[j]);
      gbias[j] += padj;
      if (!shift_adj.empty()) shift_adj[m * n + j] = padj;
    }
    std::fill(work.cadj.begin(), work.cadj.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double padj = work.preadj[j];
      const double* trow = tri + tri_row_offset(static_cast<int>(j));
      double* gtrow = gtri + tri_row_offset(static_cast<int>(j));
      for (std::size_t k = 0; k < j; ++k) {
        gtrow[k] += padj * cin[k];
        if (!local) work.cadj[k] += padj * trow[k];
      }
      if (!local) work.cadj[j] += padj * positive_weight(diag_free[j]);
    }
  }
}

}  // namespace

TriangularFlow make_triangular_flow(int n, int depth, CounterRng& rng, double leak) {
  if (n < 1 || depth < 0) {
    throw ValidationError("triangular flow: need n >= 1 and depth >= 0");
  }
  TriangularFlow net;
  net.n = n;
  net.depth = depth;
  net.leak = leak;
  net.std_mean.assign(static_cast<std::size_t>(n), 0.0);
  net.std_std.assign(static_cast<std::size_t>(n), 1.0);
  net.theta.resize(net.n_params());
  const double interior_diag = softplus_inv(1.0 / (0.25 + leak));
  const double final_diag = softplus_inv(4.0);
  std::size_t k = 0;
  for (std::size_t m = 0; m < net.n_maps(); ++m) {
    const bool final_map = (m + 1 == net.n_maps());
    for (int i = 0; i < n * (n - 1) / 2; ++i) net.theta[k++] = 0.1 * rng.normal();
    for (int i = 0; i < n; ++i) {
      net.theta[k++] = (final_map ? final_diag : interior_diag) + 0.15 * rng.normal();
    }
    for (int i = 0; i < n; ++i) net.theta[k++] = final_map ? 0.0 : rng.uniform(-1.0, 1.0);
  }
  return net;
}

FlowForward forward_flow(const TriangularFlow& net, std::span<const double> a) {
  thread_local NdWork work;
  FlowForward out;
  out.diag = DenseMatrix(net.n_maps(), static_cast<std::size_t>(net.n));
  forward_store(net, a, {}, work, &out.diag);
  out.out = work.c.back();
  return out;
}

LocalLossTable local_losses(const TriangularFlow& net, std::span<const double> a) {
  const FlowForward f = forward_flow(net, a);
  LocalLossTable table;
  table.losses = DenseMatrix(f.diag.rows(), f.diag.cols());
  double sum = 0.0;
  for (std::size_t m = 0; m < f.diag.rows(); ++m) {
    for (std::size_t j = 0; j < f.diag.cols(); ++j) {
      const double term = -std::log(std::max(f.diag(m, j), kTiny));
      table.losses(m, j) = term;
      sum += term;
    }
  }
  table.sum = sum;
  return table;
}

double nll_nd(const TriangularFlow& net, std::span<const double> a) {
  thread_local NdWork work;
  return forward_store(net, a, {}, work, nullptr);
}

std::vector<double> autoregressive_conditionals(const TriangularFlow& net,
                                                std::span<const double> a) {
  const FlowForward f = forward_flow(net, a);
  std::vector<double> cond(static_cast<std::size_t>(net.n), 1.0);
  for (std::size_t j = 0; j < cond.size(); ++j) {
    for (std::size_t m = 0; m < f.diag.rows(); ++m) cond[j] *= f.diag(m, j);
  }
  return cond;
}

double density_nd(const TriangularFlow& net, std::span<const double> a) {
  return std::exp(-nll_nd(net, a));
}

double nll_gradient_nd(const TriangularFlow& net, const std::vector<std::vector<double>>& samples,
                       std::span<double> grad, bool mode_local) {
  thread_local NdWork work;
  std::fill(grad.begin(), grad.end(), 0.0);
  std::vector<double> losses(samples.size());
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  for (std::size_t s = 0; s < samples.size(); ++s) {
    losses[s] = forward_store(net, samples[s], {}, work, nullptr);
    backward_store(net, work, grad, {}, inv_n, mode_local);
  }
  return kahan_sum(losses) * inv_n;
}

namespace {

std::vector<std::vector<double>> collect_rows(const Dataset& data,
                                              const std::vector<std::string>& columns) {
  std::vector<std::vector<double>> rows(data.n_rows());
  for (std::size_t r = 0; r < data.n_rows(); ++r) rows[r] = data.numeric_row(columns, r);
  return rows;
}

void standardize_from_rows(TriangularFlow& net, const std::vector<std::vector<double>>& rows) {
  const std::size_t n = static_cast<std::size_t>(net.n);
  for (std::size_t j = 0; j < n; ++j) {
    double mean = 0.0;
    for (const auto& r : rows) mean += r[j];
    mean /= static_cast<double>(rows.size());
    double var = 0.0;
    for (const auto& r : rows) var += (r[j] - mean) * (r[j] - mean);
    var /= static_cast<double>(rows.size());
    if (var <= 0.0) {
      throw ValidationError("train_nd: zero-variance column " + std::to_string(j));
    }
    net.std_mean[j] = mean;
    net.std_std[j] = std::sqrt(var);
  }
}

}  // namespace

std::pair<TriangularFlow, RunReport> train_nd(const Dataset& data, const TrainConfig& config,
                                              std::vector<std::string> columns) {
  const auto t0 = std::chrono::steady_clock::now();
  if (columns.empty()) columns = data.numeric_column_names();
  if (!config.ordering.empty()) {
    if (config.ordering.size() != columns.size()) {
      throw ValidationError("train_nd: ordering length must match column count");
    }
    std::vector<std::string> permuted;
    std::vector<bool> seen(columns.size(), false);
    for (int idx : config.ordering) {
      if (idx < 0 || static_cast<std::size_t>(idx) >= columns.size() ||
          seen[static_cast<std::size_t>(idx)]) {
        throw ValidationError("train_nd: ordering must be a permutation of column indices");
      }
      seen[static_cast<std::size_t>(idx)] = true;
      permuted.push_back(columns[static_cast<std::size_t>(idx)]);
    }
    columns = std::move(permuted);
  }
  if (columns.empty()) {
    throw ValidationError("train_nd: no numeric columns");
  }
  if (data.n_rows() == 0) {
    throw ValidationError("train_nd: empty dataset");
  }
  const bool local = config.mode == "local";
  if (!local && config.mode != "global") {
    throw ValidationError("train_nd: mode must be 'global' or 'local'");
  }

  const std::vector<std::vector<double>> rows = collect_rows(data, columns);
  CounterRng rng(config.seed);
  TriangularFlow net = make_triangular_flow(static_cast<int>(columns.size()), config.depth, rng);
  standardize_from_rows(net, rows);

  RunReport report;
  report.mode = config.mode;
  report.config_echo = config.to_json();

  OptimizerState opt = make_optimizer(config.optimizer, config.learning_rate);
  std::vector<double> grad(net.theta.size());
  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  double prev_loss = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    if (config.batch_size <= 0 || static_cast<std::size_t>(config.batch_size) >= rows.size()) {
      epoch_loss = nll_gradient_nd(net, rows, grad, local);
      sgd_step(net.theta, grad, opt);
    } else {
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.uniform_int(i)]);
      }
      std::vector<double> losses;
      std::vector<std::vector<double>> batch;
      const std::size_t bs = static_cast<std::size_t>(config.batch_size);
      for (std::size_t start = 0; start < rows.size(); start += bs) {
        batch.clear();
        for (std::size_t i = start; i < std::min(start + bs, rows.size()); ++i) {
          batch.push_back(rows[order[i]]);
        }
        const double loss = nll_gradient_nd(net, batch, grad, local);
        losses.push_back(loss * static_cast<double>(batch.size()));
        sgd_step(net.theta, grad, opt);
      }
      epoch_loss = kahan_sum(losses) / static_cast<double>(rows.size());
    }
    if (std::isnan(epoch_loss)) {
      throw NumericError("train_nd: NaN loss at epoch " + std::to_string(epoch));
    }
    report.epoch_losses.push_back(epoch_loss);
    if (std::abs(prev_loss - epoch_loss) < config.loss_tol) break;
    prev_loss = epoch_loss;
  }
  report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                       .count();
  return {std::move(net), std::move(report)};
}

FlowForward forward_conditional(const ConditionalFlow& net, std::span<const double> x,
                                std::span<const double> t) {
  thread_local NdWork work;
  thread_local MlpWork mwork;
  std::vector<double> xs(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) xs[i] = (x[i] - net.x_mean[i]) / net.x_std[i];
  mlp_forward(net.conditioner, xs, mwork);
  FlowForward out;
  out.diag = DenseMatrix(net.flow.n_maps(), static_cast<std::size_t>(net.flow.n));
  forward_store(net.flow, t, mwork.h.back(), work, &out.diag);
  out.out = work.c.back();
  return out;
}

double conditional_nll(const ConditionalFlow& net, std::span<const double> x,
                       std::span<const double> t) {
  thread_local NdWork work;
  thread_local MlpWork mwork;
  std::vector<double> xs(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) xs[i] = (x[i] - net.x_mean[i]) / net.x_std[i];
  mlp_forward(net.conditioner, xs, mwork);
  return forward_store(net.flow, t, mwork.h.back(), work, nullptr);
}

double conditional_density(const ConditionalFlow& net, std::span<const double> x,
                           std::span<const double> t) {
  return std::exp(-conditional_nll(net, x, t));
}

std::pair<ConditionalFlow, RunReport> train_conditional(const Dataset& data,
                                                        const std::vector<std::string>& x_columns,
                                                        const std::vector<std::string>& t_columns,
                                                        const TrainConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  if (x_columns.empty() || t_columns.empty()) {
    throw ValidationError("train_conditional: both column groups must be nonempty");
  }
  if (data.n_rows() == 0) {
    throw ValidationError("train_conditional: empty dataset");
  }
  const std::vector<std::vector<double>> xrows = collect_rows(data, x_columns);
  const std::vector<std::vector<double>> trows = collect_rows(data, t_columns);

  CounterRng rng(config.seed);
  ConditionalFlow net;
  net.flow = make_triangular_flow(static_cast<int>(t_columns.size()), config.depth, rng);
  standardize_from_rows(net.flow, trows);
  const std::size_t n_shifts = net.flow.n_maps() * static_cast<std::size_t>(net.flow.n);
  net.conditioner = make_mlp({static_cast<int>(x_columns.size()), config.conditioner_hidden,
                              static_cast<int>(n_shifts)},
                             rng);
  // Zero the output layer so training starts from the unconditional flow.
  const std::size_t out_off = net.conditioner.layer_offset(2);
  std::fill(net.conditioner.theta.begin() + static_cast<std::ptrdiff_t>(out_off),
            net.conditioner.theta.end(), 0.0);

  net.x_mean.assign(x_columns.size(), 0.0);
  net.x_std.assign(x_columns.size(), 1.0);
  for (std::size_t j = 0; j < x_columns.size(); ++j) {
    double mean = 0.0;
    for (const auto& r : xrows) mean += r[j];
    mean /= static_cast<double>(xrows.size());
    double var = 0.0;
    for (const auto& r : xrows) var += (r[j] - mean) * (r[j] - mean);
    var /= static_cast<double>(xrows.size());
    net.x_mean[j] = mean;
    net.x_std[j] = var > 0.0 ? std::sqrt(var) : 1.0;
  }

  RunReport report;
  report.mode = "global";
  report.config_echo = config.to_json();

  const std::size_t flow_params = net.flow.theta.size();
  std::vector<double> params(flow_params + net.conditioner.theta.size());
  auto pack = [&]() {
    std::copy(net.flow.theta.begin(), net.flow.theta.end(), params.begin());
    std::copy(net.conditioner.theta.begin(), net.conditioner.theta.end(),
              params.begin() + static_cast<std::ptrdiff_t>(flow_params));
  };
  auto unpack = [&]() {
    std::copy(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(flow_params),
              net.flow.theta.begin());
    std::copy(params.begin() + static_cast<std::ptrdiff_t>(flow_params), params.end(),
              net.conditioner.theta.begin());
  };
  pack();

  OptimizerState opt = make_optimizer(config.optimizer, config.learning_rate);
  std::vector<double> grad(params.size());
  std::vector<double> shifts_adj(n_shifts);
  NdWork work;
  MlpWork mwork;
  std::vector<double> xs(x_columns.size());
  double prev_loss = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    std::vector<double> losses(xrows.size());
    const double inv_n = 1.0 / static_cast<double>(xrows.size());
    for (std::size_t s = 0; s < xrows.size(); ++s) {
      for (std::size_t i = 0; i < xs.size(); ++i) {
        xs[i] = (xrows[s][i] - net.x_mean[i]) / net.x_std[i];
      }
      mlp_forward(net.conditioner, xs, mwork);
      losses[s] = forward_store(net.flow, trows[s], mwork.h.back(), work, nullptr);
      backward_store(net.flow, work, std::span<double>(grad.data(), flow_params), shifts_adj,
                     inv_n, /*local=*/false);
      mlp_backward(net.conditioner, mwork, shifts_adj,
                   std::span<double>(grad.data() + flow_params, net.conditioner.theta.size()));
    }
    const double epoch_loss = kahan_sum(losses) * inv_n;
    if (std::isnan(epoch_loss)) {
      throw NumericError("train_conditional: NaN loss at epoch " + std::to_string(epoch));
    }
    sgd_step(params, grad, opt);
    unpack();
    report.epoch_losses.push_back(epoch_loss);
    if (std::abs(prev_loss - epoch_loss) < config.loss_tol) break;
    prev_loss = epoch_loss;
  }
  report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                       .count();
  return {std::move(net), std::move(report)};
}

nlohmann::json triangular_flow_to_json(const TriangularFlow& net) {
  nlohmann::json layers = nlohmann::json::array();
  const std::size_t n = static_cast<std::size_t>(net.n);
  for (std::size_t m = 0; m < net.n_maps(); ++m) {
    const std::size_t off = net.map_offset(m);
    const std::size_t ntri = n * (n - 1) / 2;
    layers.push_back(nlohmann::json{
        {"tri_weights", std::vector<double>(net.theta.begin() + off,
                                            net.theta.begin() + off + ntri)},
        {"diag_free", std::vector<double>(net.theta.begin() + off + ntri,
                                          net.theta.begin() + off + ntri + n)},
        {"bias", std::vector<double>(net.theta.begin() + off + ntri + n,
                                     net.theta.begin() + off + ntri + 2 * n)}});
  }
  nlohmann::json standardize = nlohmann::json::array();
  for (std::size_t j = 0; j < n; ++j) {
    standardize.push_back({{"mean", net.std_mean[j]}, {"std", net.std_std[j]}});
  }
  return nlohmann::json{{"n", net.n},
                        {"depth", net.depth},
                        {"leak", net.leak},
                        {"layers", layers},
                        {"conditioner", nullptr},
                        {"standardize", standardize}};
}

TriangularFlow triangular_flow_from_json(const nlohmann::json& j) {
  TriangularFlow net;
  net.n = j.at("n").get<int>();
  net.depth = j.at("depth").get<int>();
  net.leak = j.at("leak").get<double>();
  net.theta.resize(net.n_params());
  const std::size_t n = static_cast<std::size_t>(net.n);
  const auto& layers = j.at("layers");
  if (layers.size() != net.n_maps()) {
    throw ValidationError("flow checkpoint: layer count mismatch");
  }
  std::size_t k = 0;
  for (const auto& layer : layers) {
    for (double v : layer.at("tri_weights").get<std::vector<double>>()) net.theta[k++] = v;
    for (double v : layer.at("diag_free").get<std::vector<double>>()) net.theta[k++] = v;
    for (double v : layer.at("bias").get<std::vector<double>>()) net.theta[k++] = v;
  }
  if (k != net.theta.size()) {
    throw ValidationError("flow checkpoint: parameter count mismatch");
  }
  net.std_mean.resize(n);
  net.std_std.resize(n);
  const auto& standardize = j.at("standardize");
  for (std::size_t i = 0; i < n; ++i) {
    net.std_mean[i] = standardize.at(i).at("mean").get<double>();
    net.std_std[i] = standardize.at(i).at("std").get<double>();
  }
  return net;
}

nlohmann::json conditional_flow_to_json(const ConditionalFlow& net) {
  nlohmann::json j = triangular_flow_to_json(net.flow);
  j["conditioner"] = nlohmann::json{{"widths", net.conditioner.widths},
                                    {"theta", net.conditioner.theta},
                                    {"x_mean", net.x_mean},
                                    {"x_std", net.x_std}};
  return j;
}

ConditionalFlow conditional_flow_from_json(const nlohmann::json& j) {
  ConditionalFlow net;
  net.flow = triangular_flow_from_json(j);
  const auto& c = j.at("conditioner");
  net.conditioner.widths = c.at("widths").get<std::vector<int>>();
  net.conditioner.theta = c.at("theta").get<std::vector<double>>();
  net.x_mean = c.at("x_mean").get<std::vector<double>>();
  net.x_std = c.at("x_std").get<std::vector<double>>();
  return net;
}

}  // namespace probe
