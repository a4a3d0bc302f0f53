#include "probe/timeevo.hpp"

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
constexpr int kMaxHalvings = 20;

double positive_weight(double free) { return softplus(free) + kPosFloor; }
double softplus_inv(double y) { return std::log(std::expm1(y)); }

}  // namespace

DenseMatrix LinearTimeModel::weight_matrix() const {
  DenseMatrix w(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
  std::size_t k = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      w(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = w_offdiag[k++];
    }
  }
  return w;
}

LinearTimeModel make_linear_model(int n, double horizon, CounterRng& rng, double weight_scale) {
  LinearTimeModel model;
  model.n = n;
  model.horizon = horizon;
  model.w_offdiag.resize(static_cast<std::size_t>(n) * (n - 1));
  for (double& w : model.w_offdiag) w = weight_scale * rng.normal();
  model.bias.resize(static_cast<std::size_t>(n));
  for (double& b : model.bias) b = 0.5 * rng.normal();
  return model;
}

std::vector<double> evolve_linear_exact(const LinearTimeModel& model, std::span<const double> a0) {
  const std::size_t n = static_cast<std::size_t>(model.n);
  if (a0.size() != n) {
    throw ValidationError("evolve_linear_exact: dimension mismatch");
  }
  // Augmented system: d/dt [a;1] = [[W, b],[0,0]] [a;1], so a(T) comes out of
  // one matrix exponential even when W is singular.
  DenseMatrix aug(n + 1, n + 1);
  const DenseMatrix w = model.weight_matrix();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) aug(i, j) = w(i, j);
    aug(i, n) = model.bias[i];
  }
  const DenseMatrix e = matrix_exp(aug, model.horizon);
  std::vector<double> v(n + 1);
  std::copy(a0.begin(), a0.end(), v.begin());
  v[n] = 1.0;
  const std::vector<double> out = matvec(e, v);
  return std::vector<double>(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n));
}

Trajectory evolve_linear_euler(const LinearTimeModel& model, std::span<const double> a0,
                               double dt) {
  if (!(dt > 0.0) || dt > model.horizon) {
    throw ValidationError("evolve_linear_euler: requires 0 < dt <= T");
  }
  const std::size_t n = static_cast<std::size_t>(model.n);
  const DenseMatrix w = model.weight_matrix();
  Trajectory traj;
  traj.times.push_back(0.0);
  traj.states.emplace_back(a0.begin(), a0.end());
  double t = 0.0;
  while (t < model.horizon - 1e-12) {
    const double step = std::min(dt, model.horizon - t);
    const std::vector<double>& a = traj.states.back();
    std::vector<double> next(n);
    for (std::size_t i = 0; i < n; ++i) {
      double drift = model.bias[i];
      for (std::size_t j = 0; j < n; ++j) drift += w(i, j) * a[j];
      next[i] = a[i] + drift * step;
    }
    t += step;
    traj.times.push_back(t);
    traj.states.push_back(std::move(next));
    traj.step_dt.push_back(step);
  }
  return traj;
}

double linear_phi(const LinearTimeModel& model, std::span<const double> a0) {
  const QuadraticLoss loss = linear_quadratic_loss(model, a0);
  const double log_norm = 0.5 * model.n * std::log(M_PI);
  return std::exp(-loss.total - log_norm);
}

QuadraticLoss linear_quadratic_loss(const LinearTimeModel& model, std::span<const double> a0) {
  const std::vector<double> aT = evolve_linear_exact(model, a0);
  QuadraticLoss loss;
  loss.per_node.resize(aT.size());
  for (std::size_t i = 0; i < aT.size(); ++i) {
    loss.per_node[i] = aT[i] * aT[i];
    loss.total += loss.per_node[i];
  }
  return loss;
}

double NonlinearTimeModel::weight(int i, int j) const {
  if (i == j) return 0.0;
  const std::size_t idx =
      static_cast<std::size_t>(i) * (n - 1) + static_cast<std::size_t>(j < i ? j : j - 1);
  return theta[idx];
}

NonlinearTimeModel make_nonlinear_model(int n, int m, int poly_degree, double horizon, double dt,
                                        CounterRng& rng, double weight_scale) {
  if (n < 1 || m < 0 || m > n) {
    throw ValidationError("nonlinear model: requires 1 <= m <= n");
  }
  NonlinearTimeModel model;
  model.n = n;
  model.m = m;
  model.poly_degree = poly_degree;
  model.horizon = horizon;
  model.dt = dt;
  model.theta.resize(model.n_params());
  std::size_t k = 0;
  for (int i = 0; i < n * (n - 1); ++i) model.theta[k++] = weight_scale * rng.normal();
  const double unit = softplus_inv(1.0);
  for (int i = 0; i < n; ++i) {
    model.theta[k++] = 0.1 * rng.normal();         // t0
    model.theta[k++] = unit + 0.2 * rng.normal();  // t1_free
    model.theta[k++] = unit + 0.2 * rng.normal();  // t2_free
    for (int p = 0; p < poly_degree; ++p) model.theta[k++] = 0.1 * rng.normal();
  }
  return model;
}

BoundaryEval eval_boundary(const NonlinearTimeModel& model, int node, double a) {
  const std::size_t off = model.node_offset(node);
  const double t0 = model.theta[off];
  const double th1 = positive_weight(model.theta[off + 1]);
  const double th2 = positive_weight(model.theta[off + 2]);
  const double om = 1.0 - a;
  BoundaryEval e;
  e.b = t0 - th1 * std::log(a) + th2 * std::log(om);
  e.bp = -th1 / a - th2 / om;
  e.bpp = th1 / (a * a) - th2 / (om * om);
  double apow = 1.0;  // a^(p-1) rolling
  for (int p = 1; p <= model.poly_degree; ++p) {
    const double c = model.theta[off + 2 + static_cast<std::size_t>(p)];
    // contribution c * a^p
    e.bpp += (p >= 2) ? c * p * (p - 1) * ((p == 2) ? 1.0 : std::pow(a, p - 2)) : 0.0;
    e.bp += c * p * apow;
    apow *= a;
    e.b += c * apow;
  }
  return e;
}

std::vector<double> assign_input(const NonlinearTimeModel& model, std::span<const double> x,
                                 CounterRng& rng) {
  if (x.size() != static_cast<std::size_t>(model.m)) {
    throw ValidationError("assign_input: expected " + std::to_string(model.m) + " data values");
  }
  std::vector<double> a0(static_cast<std::size_t>(model.n));
  std::copy(x.begin(), x.end(), a0.begin());
  for (int i = model.m; i < model.n; ++i) a0[static_cast<std::size_t>(i)] = rng.uniform_open();
  return a0;
}

Trajectory evolve_nonlinear(const NonlinearTimeModel& model, std::span<const double> a0,
                            long* halving_count) {
  const std::size_t n = static_cast<std::size_t>(model.n);
  if (a0.size() != n) {
    throw ValidationError("evolve_nonlinear: dimension mismatch");
  }
  for (double v : a0) {
    if (!(v > 0.0 && v < 1.0)) {
      throw ValidationError("evolve_nonlinear: initial state must lie in (0,1)");
    }
  }
  Trajectory traj;
  traj.times.push_back(0.0);
  traj.states.emplace_back(a0.begin(), a0.end());
  double t = 0.0;
  std::vector<double> bp(n), drift(n), next(n);
  while (t < model.horizon - 1e-12) {
    const std::vector<double>& a = traj.states.back();
    for (std::size_t i = 0; i < n; ++i) {
      const BoundaryEval e = eval_boundary(model, static_cast<int>(i), a[i]);
      bp[i] = e.bp;
      double d = e.b;
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) d += model.weight(static_cast<int>(i), static_cast<int>(j)) * a[j];
      }
      drift[i] = d;
    }
    double step = std::min(model.dt, model.horizon - t);
    bool accepted = false;
    for (int attempt = 0; attempt <= kMaxHalvings; ++attempt) {
      bool ok = true;
      for (std::size_t i = 0; i < n && ok; ++i) {
        if (1.0 + bp[i] * step <= 0.0) ok = false;
      }
      if (ok) {
        for (std::size_t i = 0; i < n; ++i) {
          next[i] = a[i] + drift[i] * step;
          if (!(next[i] > 0.0 && next[i] < 1.0)) {
            ok = false;
            break;
          }
        }
      }
      if (ok) {
        accepted = true;
        break;
      }
      step *= 0.5;
      if (halving_count != nullptr) ++(*halving_count);
    }
    if (!accepted) {
      throw NumericError("evolve_nonlinear: stiffness at t=" + std::to_string(t) +
                         " (halving budget exceeded)");
    }
    traj.step_dt.push_back(step);
    traj.step_bprime.push_back(bp);
    std::vector<double> diag(n);
    for (std::size_t i = 0; i < n; ++i) diag[i] = 1.0 + bp[i] * step;
    traj.step_diag.push_back(std::move(diag));
    t += step;
    traj.times.push_back(t);
    traj.states.push_back(next);
  }
  return traj;
}

double nonlinear_nll(const Trajectory& traj) {
  double nll = 0.0;
  for (const std::vector<double>& diag : traj.step_diag) {
    for (double f : diag) {
      if (f <= 0.0) {
        throw NumericError("nonlinear_nll: nonpositive Jacobian factor; reduce dt");
      }
      nll -= std::log(f);
    }
  }
  return nll;
}

double nonlinear_nll_continuum(const Trajectory& traj) {
  double nll = 0.0;
  for (std::size_t s = 0; s < traj.n_steps(); ++s) {
    for (double bp : traj.step_bprime[s]) nll -= bp * traj.step_dt[s];
  }
  return nll;
}

TimeLocalLossTable nonlinear_local_losses(const Trajectory& traj) {
  TimeLocalLossTable table;
  table.losses.resize(traj.n_steps());
  for (std::size_t s = 0; s < traj.n_steps(); ++s) {
    table.losses[s].resize(traj.step_bprime[s].size());
    for (std::size_t i = 0; i < traj.step_bprime[s].size(); ++i) {
      table.losses[s][i] = -traj.step_bprime[s][i];
      table.sum_times_dt += table.losses[s][i] * traj.step_dt[s];
    }
  }
  return table;
}

namespace {

double residual_for(const std::function<std::vector<double>(std::span<const double>)>& f,
                    std::span<const double> center, CounterRng& rng, int trials, bool interior) {
  const std::size_t n = center.size();
  const std::vector<double> fc = f(center);
  double worst = 0.0;
  std::vector<double> u(n), v(n), mix(n);
  for (int trial = 0; trial < trials; ++trial) {
    const double alpha = rng.uniform(0.2, 0.45);
    const double beta = rng.uniform(0.2, 0.45);
    for (std::size_t i = 0; i < n; ++i) {
      const double span = interior ? 0.2 : 2.0;
      u[i] = center[i] + rng.uniform(-span, span);
      v[i] = center[i] + rng.uniform(-span, span);
      mix[i] = center[i] + alpha * (u[i] - center[i]) + beta * (v[i] - center[i]);
    }
    const std::vector<double> fu = f(u);
    const std::vector<double> fv = f(v);
    const std::vector<double> fm = f(mix);
    for (std::size_t i = 0; i < n; ++i) {
      const double lhs = fm[i] - fc[i];
      const double rhs = alpha * (fu[i] - fc[i]) + beta * (fv[i] - fc[i]);
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  }
  return worst;
}

}  // namespace

double linearity_residual(const LinearTimeModel& model, CounterRng& rng, int trials) {
  const std::vector<double> center(static_cast<std::size_t>(model.n), 0.0);
  return residual_for(
      [&](std::span<const double> a) { return evolve_linear_exact(model, a); }, center, rng,
      trials, /*interior=*/false);
}

double linearity_residual(const NonlinearTimeModel& model, CounterRng& rng, int trials) {
  const std::vector<double> center(static_cast<std::size_t>(model.n), 0.5);
  return residual_for(
      [&](std::span<const double> a) {
        return evolve_nonlinear(model, a).states.back();
      },
      center, rng, trials, /*interior=*/true);
}

namespace {

// BPTT over a stored rollout; accumulates dL/dtheta for the discrete nll.
void rollout_backward(const NonlinearTimeModel& model, const Trajectory& traj,
                      std::span<double> grad, double weight) {
  const std::size_t n = static_cast<std::size_t>(model.n);
  std::vector<double> adj(n, 0.0), adj_prev(n, 0.0);
  for (std::size_t s = traj.n_steps(); s-- > 0;) {
    const std::vector<double>& a = traj.states[s];
    const double dt = traj.step_dt[s];
    // Parameter gradients from producing a(s+1) = a + (W a + b(a)) dt.
    for (std::size_t i = 0; i < n; ++i) {
      const double ai_adj = adj[i] * dt;
      if (ai_adj != 0.0) {
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          const std::size_t idx = i * (n - 1) + (j < i ? j : j - 1);
          grad[idx] += ai_adj * a[j];
        }
        const std::size_t off = model.node_offset(static_cast<int>(i));
        const double sp1 = sigmoid(model.theta[off + 1]);
        const double sp2 = sigmoid(model.theta[off + 2]);
        grad[off] += ai_adj;                                  // t0
        grad[off + 1] += ai_adj * (-std::log(a[i])) * sp1;    // theta1 path
        grad[off + 2] += ai_adj * std::log(1.0 - a[i]) * sp2; // theta2 path
        double apow = a[i];
        for (int p = 1; p <= model.poly_degree; ++p) {
          grad[off + 2 + static_cast<std::size_t>(p)] += ai_adj * apow;
          apow *= a[i];
        }
      }
    }
    // State adjoint through the dynamics Jacobian I + (W + diag(b')) dt.
    for (std::size_t k = 0; k < n; ++k) {
      double acc = adj[k] * (1.0 + traj.step_bprime[s][k] * dt);
      for (std::size_t i = 0; i < n; ++i) {
        if (i == k) continue;
        acc += adj[i] * model.weight(static_cast<int>(i), static_cast<int>(k)) * dt;
      }
      adj_prev[k] = acc;
    }
    // Localized loss terms at this slice: -ln(1 + b'_k(a_k) dt).
    for (std::size_t k = 0; k < n; ++k) {
      const double factor = 1.0 + traj.step_bprime[s][k] * dt;
      const double coeff = -weight * dt / factor;
      const std::size_t off = model.node_offset(static_cast<int>(k));
      const double sp1 = sigmoid(model.theta[off + 1]);
      const double sp2 = sigmoid(model.theta[off + 2]);
      grad[off + 1] += coeff * (-1.0 / a[k]) * sp1;
      grad[off + 2] += coeff * (-1.0 / (1.0 - a[k])) * sp2;
      double apow = 1.0;
      for (int p = 1; p <= model.poly_degree; ++p) {
        grad[off + 2 + static_cast<std::size_t>(p)] += coeff * p * apow;
        apow *= a[k];
      }
      const BoundaryEval e = eval_boundary(model, static_cast<int>(k), a[k]);
      adj_prev[k] += coeff * e.bpp;
    }
    std::swap(adj, adj_prev);
  }
}

}  // namespace

TrainedTimeModel train_time_model(const Dataset& data, const TrainConfig& config) {
  const auto t_start = std::chrono::steady_clock::now();
  const std::vector<std::string> columns = data.numeric_column_names();
  if (columns.empty() || data.n_rows() == 0) {
    throw ValidationError("train_time_model: needs a nonempty numeric dataset");
  }
  const int m = static_cast<int>(columns.size());
  const int n = config.nodes > 0 ? config.nodes : 2 * m;
  if (n < m) {
    throw ValidationError("train_time_model: nodes must be >= data column count");
  }
  const bool sequential = config.mode == "sequential_local";
  if (!sequential && config.mode != "global") {
    throw ValidationError("train_time_model: mode must be 'global' or 'sequential_local'");
  }

  TrainedTimeModel trained;
  trained.col_min.resize(columns.size());
  trained.col_max.resize(columns.size());
  std::vector<std::vector<double>> rows(data.n_rows());
  for (std::size_t r = 0; r < data.n_rows(); ++r) rows[r] = data.numeric_row(columns, r);
  for (std::size_t j = 0; j < columns.size(); ++j) {
    double lo = rows[0][j], hi = rows[0][j];
    for (const auto& row : rows) {
      lo = std::min(lo, row[j]);
      hi = std::max(hi, row[j]);
    }
    if (!(hi > lo)) {
      throw ValidationError("train_time_model: zero-range column " + columns[j]);
    }
    trained.col_min[j] = lo;
    trained.col_max[j] = hi;
  }
  std::vector<std::vector<double>> scaled(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    scaled[r].resize(columns.size());
    for (std::size_t j = 0; j < columns.size(); ++j) {
      const double unit = (rows[r][j] - trained.col_min[j]) /
                          (trained.col_max[j] - trained.col_min[j]);
      scaled[r][j] = kInteriorMargin + (1.0 - 2.0 * kInteriorMargin) * unit;
    }
  }

  CounterRng rng(config.seed);
  trained.model = make_nonlinear_model(n, m, config.poly_degree, config.horizon, config.dt, rng);
  NonlinearTimeModel& model = trained.model;

  RunReport& report = trained.report;
  report.mode = config.mode;
  report.config_echo = config.to_json();

  OptimizerState opt = make_optimizer(config.optimizer, config.learning_rate);
  std::vector<double> grad(model.theta.size());
  std::vector<std::size_t> order(scaled.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  double prev_loss = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.uniform_int(i)]);
    }
    std::vector<double> losses(scaled.size());
    if (!sequential) {
      const std::size_t bs = config.batch_size > 0 ? static_cast<std::size_t>(config.batch_size)
                                                   : scaled.size();
      std::size_t start = 0;
      while (start < scaled.size()) {
        const std::size_t end = std::min(start + bs, scaled.size());
        std::fill(grad.begin(), grad.end(), 0.0);
        const double inv_b = 1.0 / static_cast<double>(end - start);
        for (std::size_t i = start; i < end; ++i) {
          const std::vector<double> a0 = assign_input(model, scaled[order[i]], rng);
          const Trajectory traj = evolve_nonlinear(model, a0, &report.guard_halvings);
          losses[i] = nonlinear_nll(traj);
          rollout_backward(model, traj, grad, inv_b);
        }
        sgd_step(model.theta, grad, opt);
        start = end;
      }
    } else {
      // Sequential-local: at each accepted time slice, update from that
      // slice's localized terms only (states treated as data; the coupling
      // weights never appear in the localized terms).
      std::vector<double> slice_grad(model.theta.size());
      for (std::size_t i = 0; i < scaled.size(); ++i) {
        const std::vector<double> a0 = assign_input(model, scaled[order[i]], rng);
        double sample_nll = 0.0;
        std::vector<double> a = a0;
        double t = 0.0;
        while (t < model.horizon - 1e-12) {
          // One guarded Euler chunk from the current state with the current
          // parameters, then one localized update per accepted slice.
          NonlinearTimeModel stepper = model;
          stepper.horizon = std::min(model.dt, model.horizon - t);
          const Trajectory one = evolve_nonlinear(stepper, a, &report.guard_halvings);
          for (std::size_t s = 0; s < one.n_steps(); ++s) {
            const double dt = one.step_dt[s];
            std::fill(slice_grad.begin(), slice_grad.end(), 0.0);
            for (int k = 0; k < model.n; ++k) {
              sample_nll -= std::log(one.step_diag[s][static_cast<std::size_t>(k)]);
              const double ak = one.states[s][static_cast<std::size_t>(k)];
              const BoundaryEval e = eval_boundary(model, k, ak);
              const double factor = 1.0 + e.bp * dt;
              if (factor <= 1e-6) continue;  // parameter drift made the slice stiff
              const double coeff = -dt / factor;
              const std::size_t off = model.node_offset(k);
              const double sp1 = sigmoid(model.theta[off + 1]);
              const double sp2 = sigmoid(model.theta[off + 2]);
              slice_grad[off + 1] += coeff * (-1.0 / ak) * sp1;
              slice_grad[off + 2] += coeff * (-1.0 / (1.0 - ak)) * sp2;
              double apow = 1.0;
              for (int p = 1; p <= model.poly_degree; ++p) {
                slice_grad[off + 2 + static_cast<std::size_t>(p)] += coeff * p * apow;
                apow *= ak;
              }
            }
            sgd_step(model.theta, slice_grad, opt);
          }
          t += stepper.horizon;
          a = one.states.back();
        }
        losses[i] = sample_nll;
      }
    }
    const double epoch_loss = kahan_sum(losses) / static_cast<double>(scaled.size());
    if (!std::isfinite(epoch_loss)) {
      throw NumericError("train_time_model: non-finite loss at epoch " + std::to_string(epoch));
    }
    report.epoch_losses.push_back(epoch_loss);
    if (std::abs(prev_loss - epoch_loss) < config.loss_tol) break;
    prev_loss = epoch_loss;
  }
  report.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start)
          .count();
  return trained;
}

double evaluate_time_model(const NonlinearTimeModel& model,
                           const std::vector<std::vector<double>>& scaled_rows,
                           std::uint64_t seed) {
  CounterRng rng(seed, /*stream=*/7);
  std::vector<double> losses(scaled_rows.size());
  for (std::size_t i = 0; i < scaled_rows.size(); ++i) {
    const std::vector<double> a0 = assign_input(model, scaled_rows[i], rng);
    losses[i] = nonlinear_nll(evolve_nonlinear(model, a0));
  }
  return kahan_sum(losses) / static_cast<double>(losses.size());
}

std::vector<double> scale_row(const TrainedTimeModel& trained, std::span<const double> raw) {
  std::vector<double> out(raw.size());
  for (std::size_t j = 0; j < raw.size(); ++j) {
    const double unit = (raw[j] - trained.col_min[j]) / (trained.col_max[j] - trained.col_min[j]);
    out[j] = kInteriorMargin + (1.0 - 2.0 * kInteriorMargin) * unit;
  }
  return out;
}

std::vector<double> recover_input_density(const NonlinearTimeModel& model,
                                          const std::vector<std::vector<double>>& grid_points,
                                          int n_mc, std::uint64_t seed) {
  if (n_mc < 1) {
    throw ValidationError("recover_input_density: n_mc must be >= 1");
  }
  CounterRng rng(seed, /*stream=*/11);
  const int draws = model.m == model.n ? 1 : n_mc;
  std::vector<double> density(grid_points.size(), 0.0);
  for (std::size_t g = 0; g < grid_points.size(); ++g) {
    std::vector<double> acc(static_cast<std::size_t>(draws));
    for (int k = 0; k < draws; ++k) {
      const std::vector<double> a0 = assign_input(model, grid_points[g], rng);
      acc[static_cast<std::size_t>(k)] = std::exp(-nonlinear_nll(evolve_nonlinear(model, a0)));
    }
    density[g] = kahan_sum(acc) / static_cast<double>(draws);
  }
  return density;
}

nlohmann::json nonlinear_model_to_json(const NonlinearTimeModel& model) {
  std::vector<double> w(model.theta.begin(),
                        model.theta.begin() + static_cast<std::ptrdiff_t>(
                                                  static_cast<std::size_t>(model.n) *
                                                  (model.n - 1)));
  nlohmann::json boundary = nlohmann::json::array();
  for (int i = 0; i < model.n; ++i) {
    const std::size_t off = model.node_offset(i);
    std::vector<double> poly(model.theta.begin() + static_cast<std::ptrdiff_t>(off + 3),
                             model.theta.begin() +
                                 static_cast<std::ptrdiff_t>(off + model.node_params()));
    boundary.push_back(nlohmann::json{{"t0", model.theta[off]},
                                      {"t1_free", model.theta[off + 1]},
                                      {"t2_free", model.theta[off + 2]},
                                      {"poly", poly}});
  }
  return nlohmann::json{{"n", model.n},       {"m", model.m},   {"W", w},
                        {"boundary", boundary}, {"T", model.horizon}, {"dt", model.dt}};
}

NonlinearTimeModel nonlinear_model_from_json(const nlohmann::json& j) {
  NonlinearTimeModel model;
  model.n = j.at("n").get<int>();
  model.m = j.at("m").get<int>();
  model.horizon = j.at("T").get<double>();
  model.dt = j.at("dt").get<double>();
  const auto& boundary = j.at("boundary");
  if (boundary.empty()) {
    throw ValidationError("time model checkpoint: empty boundary list");
  }
  model.poly_degree = static_cast<int>(boundary.at(0).at("poly").size());
  model.theta.resize(model.n_params());
  const auto w = j.at("W").get<std::vector<double>>();
  if (w.size() != static_cast<std::size_t>(model.n) * (model.n - 1)) {
    throw ValidationError("time model checkpoint: W size mismatch");
  }
  std::copy(w.begin(), w.end(), model.theta.begin());
  for (int i = 0; i < model.n; ++i) {
    const std::size_t off = model.node_offset(i);
    const auto& node = boundary.at(static_cast<std::size_t>(i));
    model.theta[off] = node.at("t0").get<double>();
    model.theta[off + 1] = node.at("t1_free").get<double>();
    model.theta[off + 2] = node.at("t2_free").get<double>();
    const auto poly = node.at("poly").get<std::vector<double>>();
    for (std::size_t p = 0; p < poly.size(); ++p) model.theta[off + 3 + p] = poly[p];
  }
  return model;
}

}  // namespace probe
