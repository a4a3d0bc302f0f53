#include "probe/heads.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "probe/core.hpp"
#include "probe/dual.hpp"
#include "probe/errors.hpp"
#include "probe/numeric.hpp"
#include "probe/optim.hpp"

namespace probe {

namespace {

constexpr double kPosFloor = 1e-6;
constexpr double kHalfLog2Pi = 0.91893853320467274178;

void standardize_columns(const std::vector<std::vector<double>>& rows, std::vector<double>& mean,
                         std::vector<double>& sd) {
  const std::size_t dim = rows.empty() ? 0 : rows[0].size();
  mean.assign(dim, 0.0);
  sd.assign(dim, 1.0);
  for (std::size_t j = 0; j < dim; ++j) {
    double m = 0.0;
    for (const auto& r : rows) m += r[j];
    m /= static_cast<double>(rows.size());
    double var = 0.0;
    for (const auto& r : rows) var += (r[j] - m) * (r[j] - m);
    var /= static_cast<double>(rows.size());
    mean[j] = m;
    sd[j] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
}

std::vector<double> standardized(std::span<const double> x, const std::vector<double>& mean,
                                 const std::vector<double>& sd) {
  std::vector<double> z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = (x[i] - mean[i]) / sd[i];
  return z;
}

std::vector<std::vector<double>> collect_rows(const Dataset& data,
                                              const std::vector<std::string>& columns) {
  std::vector<std::vector<double>> rows(data.n_rows());
  for (std::size_t r = 0; r < data.n_rows(); ++r) rows[r] = data.numeric_row(columns, r);
  return rows;
}

}  // namespace

std::vector<double> classify_probs(const SoftmaxClassifier& clf, std::span<const double> x) {
  thread_local MlpWork work;
  mlp_forward(clf.net, standardized(x, clf.x_mean, clf.x_std), work);
  return softmax(work.h.back());
}

double classifier_nll(const SoftmaxClassifier& clf, std::span<const double> x,
                      const std::string& label) {
  const auto it = std::find(clf.labels.begin(), clf.labels.end(), label);
  if (it == clf.labels.end()) {
    throw ValidationError("unknown label '" + label + "'");
  }
  const std::vector<double> p = classify_probs(clf, x);
  return -std::log(p[static_cast<std::size_t>(it - clf.labels.begin())]);
}

std::pair<SoftmaxClassifier, RunReport> train_classifier(const Dataset& data,
                                                         const std::vector<std::string>& features,
                                                         const std::string& label_column,
                                                         const TrainConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  const Column& label_col = data.column(label_column);
  if (label_col.type != ColumnType::categorical) {
    throw ValidationError("train_classifier: label column must be categorical");
  }
  if (data.n_rows() == 0) {
    throw ValidationError("train_classifier: empty dataset");
  }
  const std::vector<std::vector<double>> xrows = collect_rows(data, features);

  CounterRng rng(config.seed);
  SoftmaxClassifier clf;
  clf.labels = label_col.categories;
  const int k_labels = static_cast<int>(clf.labels.size());
  std::vector<int> widths;
  widths.push_back(static_cast<int>(features.size()));
  for (int w : config.hidden_widths) widths.push_back(w);
  widths.push_back(k_labels);
  clf.net = make_mlp(widths, rng);
  standardize_columns(xrows, clf.x_mean, clf.x_std);

  RunReport report;
  report.mode = "global";
  report.config_echo = config.to_json();

  OptimizerState opt = make_optimizer(config.optimizer, config.learning_rate);
  std::vector<double> grad(clf.net.theta.size());
  std::vector<double> out_adj(static_cast<std::size_t>(k_labels));
  MlpWork work;
  double prev_loss = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    std::vector<double> losses(xrows.size());
    const double inv_n = 1.0 / static_cast<double>(xrows.size());
    for (std::size_t s = 0; s < xrows.size(); ++s) {
      mlp_forward(clf.net, standardized(xrows[s], clf.x_mean, clf.x_std), work);
      const std::vector<double> p = softmax(work.h.back());
      const std::size_t target = static_cast<std::size_t>(label_col.codes[s]);
      losses[s] = -std::log(p[target]);
      for (std::size_t k = 0; k < p.size(); ++k) {
        out_adj[k] = inv_n * (p[k] - (k == target ? 1.0 : 0.0));
      }
      mlp_backward(clf.net, work, out_adj, grad);
    }
    const double epoch_loss = kahan_sum(losses) * inv_n;
    if (!std::isfinite(epoch_loss)) {
      throw NumericError("train_classifier: non-finite loss at epoch " + std::to_string(epoch));
    }
    sgd_step(clf.net.theta, grad, opt);
    report.epoch_losses.push_back(epoch_loss);
    if (std::abs(prev_loss - epoch_loss) < config.loss_tol) break;
    prev_loss = epoch_loss;
  }
  report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                       .count();
  return {std::move(clf), std::move(report)};
}

double gaussian_nll(const GaussianParams& p, std::span<const double> t) {
  const std::size_t n = p.mu.size();
  if (t.size() != n || p.chol.rows() != n || p.chol.cols() != n) {
    throw ValidationError("gaussian_nll: dimension mismatch");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(p.chol(i, i) > 0.0)) {
      throw NumericError("gaussian_nll: covariance factor must have positive diagonal");
    }
  }
  // Forward substitution: z = L^{-1} (t - mu).
  std::vector<double> z(n);
  double log_det_half = 0.0;
  double quad = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double acc = t[i] - p.mu[i];
    for (std::size_t j = 0; j < i; ++j) acc -= p.chol(i, j) * z[j];
    z[i] = acc / p.chol(i, i);
    log_det_half += std::log(p.chol(i, i));
    quad += z[i] * z[i];
  }
  return static_cast<double>(n) * kHalfLog2Pi + log_det_half + 0.5 * quad;
}

namespace {

std::size_t head_out_dim(int n_targets, bool identity_cov) {
  const std::size_t n = static_cast<std::size_t>(n_targets);
  return identity_cov ? n : n + n * (n + 1) / 2;
}

GaussianParams params_from_raw(std::span<const double> raw, int n_targets, bool identity_cov) {
  const std::size_t n = static_cast<std::size_t>(n_targets);
  GaussianParams p;
  p.mu.assign(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(n));
  p.chol = DenseMatrix::identity(n);
  if (!identity_cov) {
    std::size_t k = n;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        p.chol(i, j) = (i == j) ? softplus(raw[k]) + kPosFloor : raw[k];
        ++k;
      }
    }
  }
  return p;
}

// dL/d(raw outputs) for one sample; returns the nll.
double gaussian_nll_backward(std::span<const double> raw, std::span<const double> t,
                             int n_targets, bool identity_cov, std::span<double> raw_adj) {
  const std::size_t n = static_cast<std::size_t>(n_targets);
  const GaussianParams p = params_from_raw(raw, n_targets, identity_cov);
  std::vector<double> z(n);
  double log_det_half = 0.0;
  double quad = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double acc = t[i] - p.mu[i];
    for (std::size_t j = 0; j < i; ++j) acc -= p.chol(i, j) * z[j];
    z[i] = acc / p.chol(i, i);
    log_det_half += std::log(p.chol(i, i));
    quad += z[i] * z[i];
  }
  // w = L^{-T} z by backward substitution.
  std::vector<double> w(n);
  for (std::size_t i = n; i-- > 0;) {
    double acc = z[i];
    for (std::size_t j = i + 1; j < n; ++j) acc -= p.chol(j, i) * w[j];
    w[i] = acc / p.chol(i, i);
  }
  for (std::size_t i = 0; i < n; ++i) raw_adj[i] = -w[i];  // d nll / d mu
  if (!identity_cov) {
    std::size_t k = n;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        double g = -w[i] * z[j];
        if (i == j) {
          g += 1.0 / p.chol(i, i);
          g *= sigmoid(raw[k]);  // softplus chain
        }
        raw_adj[k] = g;
        ++k;
      }
    }
  }
  return static_cast<double>(n) * kHalfLog2Pi + log_det_half + 0.5 * quad;
}

}  // namespace

GaussianParams head_params(const GaussianHead& head, std::span<const double> x) {
  thread_local MlpWork work;
  mlp_forward(head.net, standardized(x, head.x_mean, head.x_std), work);
  return params_from_raw(work.h.back(), head.n_targets, head.identity_cov);
}

std::pair<GaussianHead, RunReport> train_regression(const Dataset& data,
                                                    const std::vector<std::string>& x_columns,
                                                    const std::vector<std::string>& t_columns,
                                                    const TrainConfig& config, bool identity_cov) {
  const auto t0 = std::chrono::steady_clock::now();
  if (t_columns.empty()) {
    throw ValidationError("train_regression: needs at least one target column");
  }
  if (data.n_rows() == 0) {
    throw ValidationError("train_regression: empty dataset");
  }
  const std::vector<std::vector<double>> xrows = collect_rows(data, x_columns);
  const std::vector<std::vector<double>> trows = collect_rows(data, t_columns);

  CounterRng rng(config.seed);
  GaussianHead head;
  head.n_targets = static_cast<int>(t_columns.size());
  head.identity_cov = identity_cov;
  std::vector<int> widths;
  widths.push_back(static_cast<int>(x_columns.size()));
  for (int w : config.hidden_widths) widths.push_back(w);
  widths.push_back(static_cast<int>(head_out_dim(head.n_targets, identity_cov)));
  head.net = make_mlp(widths, rng);
  standardize_columns(xrows, head.x_mean, head.x_std);

  RunReport report;
  report.mode = identity_cov ? "identity_cov" : "full_cov";
  report.config_echo = config.to_json();

  OptimizerState opt = make_optimizer(config.optimizer, config.learning_rate);
  std::vector<double> grad(head.net.theta.size());
  std::vector<double> raw_adj(head_out_dim(head.n_targets, identity_cov));
  MlpWork work;
  double prev_loss = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    std::vector<double> losses(xrows.size());
    const double inv_n = 1.0 / static_cast<double>(xrows.size());
    for (std::size_t s = 0; s < xrows.size(); ++s) {
      mlp_forward(head.net, standardized(xrows[s], head.x_mean, head.x_std), work);
      losses[s] = gaussian_nll_backward(work.h.back(), trows[s], head.n_targets, identity_cov,
                                        raw_adj);
      for (double& a : raw_adj) a *= inv_n;
      mlp_backward(head.net, work, raw_adj, grad);
    }
    const double epoch_loss = kahan_sum(losses) * inv_n;
    if (!std::isfinite(epoch_loss)) {
      throw NumericError("train_regression: non-finite loss at epoch " + std::to_string(epoch));
    }
    sgd_step(head.net.theta, grad, opt);
    report.epoch_losses.push_back(epoch_loss);
    if (std::abs(prev_loss - epoch_loss) < config.loss_tol) break;
    prev_loss = epoch_loss;
  }
  report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                       .count();
  return {std::move(head), std::move(report)};
}

ParametricFamily gaussian1d_family() {
  ParametricFamily fam;
  fam.name = "gaussian1d";
  fam.dim = 2;
  fam.log_pdf = [](std::span<const double> theta, double x) {
    const double mean = theta[0];
    const double log_std = theta[1];
    const double z = (x - mean) * std::exp(-log_std);
    return -kHalfLog2Pi - log_std - 0.5 * z * z;
  };
  fam.nll_grad = [](std::span<const double> theta, double x, std::span<double> grad) {
    const double mean = theta[0];
    const double inv_var = std::exp(-2.0 * theta[1]);
    grad[0] = (mean - x) * inv_var;
    grad[1] = 1.0 - (x - mean) * (x - mean) * inv_var;
  };
  fam.init = [](std::span<const double> xs) {
    return std::vector<double>{xs.empty() ? 0.0 : xs[0], 0.0};
  };
  return fam;
}

std::pair<std::vector<double>, RunReport> estimate_params(const Dataset& data,
                                                          const std::string& column,
                                                          const ParametricFamily& family,
                                                          const TrainConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<double>& xs = data.column(column).values;
  if (xs.size() < 2) {
    throw ValidationError("estimate_params: needs at least 2 samples");
  }
  CounterRng rng(config.seed);
  std::vector<double> theta = family.init(xs);
  std::vector<double> grad(theta.size());
  std::vector<std::size_t> order(xs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  RunReport report;
  report.mode = "streaming";
  report.config_echo = config.to_json();

  // Per-sample steps with a geometric learning-rate decay plus tail
  // averaging; random reshuffling keeps the per-epoch drift unbiased.
  const int epochs = config.epochs;
  std::vector<double> theta_avg(theta.size(), 0.0);
  long avg_count = 0;
  const int avg_start = epochs - std::max(1, epochs / 4);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.uniform_int(i)]);
    }
    const double lr =
        config.learning_rate * std::pow(0.5, 10.0 * epoch / std::max(1, epochs - 1));
    std::vector<double> losses(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double x = xs[order[i]];
      losses[i] = -family.log_pdf(theta, x);
      family.nll_grad(theta, x, grad);
      for (std::size_t k = 0; k < theta.size(); ++k) theta[k] -= lr * grad[k];
    }
    if (epoch >= avg_start) {
      for (std::size_t k = 0; k < theta.size(); ++k) theta_avg[k] += theta[k];
      ++avg_count;
    }
    const double epoch_loss = kahan_sum(losses) / static_cast<double>(xs.size());
    if (!std::isfinite(epoch_loss)) {
      throw NumericError("estimate_params: non-finite loss at epoch " + std::to_string(epoch));
    }
    report.epoch_losses.push_back(epoch_loss);
  }
  for (std::size_t k = 0; k < theta.size(); ++k) theta[k] = theta_avg[k] / avg_count;
  report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                       .count();
  return {std::move(theta), std::move(report)};
}

nlohmann::json classifier_to_json(const SoftmaxClassifier& clf) {
  return nlohmann::json{{"widths", clf.net.widths},
                        {"theta", clf.net.theta},
                        {"labels", clf.labels},
                        {"x_mean", clf.x_mean},
                        {"x_std", clf.x_std}};
}

SoftmaxClassifier classifier_from_json(const nlohmann::json& j) {
  SoftmaxClassifier clf;
  clf.net.widths = j.at("widths").get<std::vector<int>>();
  clf.net.theta = j.at("theta").get<std::vector<double>>();
  clf.labels = j.at("labels").get<std::vector<std::string>>();
  clf.x_mean = j.at("x_mean").get<std::vector<double>>();
  clf.x_std = j.at("x_std").get<std::vector<double>>();
  return clf;
}

nlohmann::json gaussian_head_to_json(const GaussianHead& head) {
  return nlohmann::json{{"widths", head.net.widths},   {"theta", head.net.theta},
                        {"n_targets", head.n_targets}, {"identity_cov", head.identity_cov},
                        {"x_mean", head.x_mean},       {"x_std", head.x_std}};
}

GaussianHead gaussian_head_from_json(const nlohmann::json& j) {
  GaussianHead head;
  head.net.widths = j.at("widths").get<std::vector<int>>();
  head.net.theta = j.at("theta").get<std::vector<double>>();
  head.n_targets = j.at("n_targets").get<int>();
  head.identity_cov = j.at("identity_cov").get<bool>();
  head.x_mean = j.at("x_mean").get<std::vector<double>>();
  head.x_std = j.at("x_std").get<std::vector<double>>();
  return head;
}

}  // namespace probe
