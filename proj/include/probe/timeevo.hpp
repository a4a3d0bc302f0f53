#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "probe/config.hpp"
#include "probe/dataset.hpp"
#include "probe/matrix.hpp"
#include "probe/rng.hpp"

namespace probe {

/// Zero-diagonal weighted digraph with linear dynamics da/dt = W a + b.
/// The diagonal entries are unrepresentable, not penalized: the parameter
/// vector stores only off-diagonal weights.
struct LinearTimeModel {
  int n = 0;
  std::vector<double> w_offdiag;  // n(n-1), row-major with the diagonal omitted
  std::vector<double> bias;
  double horizon = 1.0;

  DenseMatrix weight_matrix() const;  // materializes W with exact zero diagonal
};

LinearTimeModel make_linear_model(int n, double horizon, CounterRng& rng, double weight_scale = 0.5);

/// Closed-form a(T) via the augmented block-matrix exponential; valid for
/// singular W (no W^{-1} is ever formed).
std::vector<double> evolve_linear_exact(const LinearTimeModel& model, std::span<const double> a0);

struct Trajectory {
  std::vector<double> times;                       // accepted step boundaries, 0..T
  std::vector<std::vector<double>> states;         // per boundary
  std::vector<double> step_dt;                     // per accepted step
  std::vector<std::vector<double>> step_diag;      // nonlinear: 1 + b'_i(a(t)) dt
  std::vector<std::vector<double>> step_bprime;    // nonlinear: b'_i(a(t))

  std::size_t n_steps() const { return step_dt.size(); }
};

Trajectory evolve_linear_euler(const LinearTimeModel& model, std::span<const double> a0, double dt);

/// Model function with E(a) = a^2: exp(-|a(T)|^2) / pi^{n/2}.
double linear_phi(const LinearTimeModel& model, std::span<const double> a0);

struct QuadraticLoss {
  double total = 0.0;               // sum of per-node terms (same arithmetic)
  std::vector<double> per_node;     // a_i(T)^2
};
QuadraticLoss linear_quadratic_loss(const LinearTimeModel& model, std::span<const double> a0);

/// Per-node boundary drift b(a) = t0 - theta1*ln(a) + theta2*ln(1-a) + poly(a);
/// theta1, theta2 positive via softplus, so b diverges at both state bounds.
struct NonlinearTimeModel {
  int n = 0;
  int m = 0;  // data-driven nodes; the rest start from Uniform(0,1) draws
  int poly_degree = 3;
  double horizon = 1.0;
  double dt = 1e-2;
  std::vector<double> theta;  // w_offdiag then per node {t0, t1_free, t2_free, poly...}

  std::size_t node_params() const { return 3 + static_cast<std::size_t>(poly_degree); }
  std::size_t node_offset(int i) const {
    return static_cast<std::size_t>(n) * (n - 1) + static_cast<std::size_t>(i) * node_params();
  }
  std::size_t n_params() const {
    return static_cast<std::size_t>(n) * (n - 1) + static_cast<std::size_t>(n) * node_params();
  }
  double weight(int i, int j) const;  // w_ij, exact zero when i == j
};

NonlinearTimeModel make_nonlinear_model(int n, int m, int poly_degree, double horizon, double dt,
                                        CounterRng& rng, double weight_scale = 0.3);

struct BoundaryEval {
  double b, bp, bpp;
};
BoundaryEval eval_boundary(const NonlinearTimeModel& model, int node, double a);

/// a(0) = (x_1..x_m, r_{m+1}..r_n) with auxiliaries drawn from Uniform(0,1).
std::vector<double> assign_input(const NonlinearTimeModel& model, std::span<const double> x,
                                 CounterRng& rng);

/// Explicit Euler with a state-validity guard: a step that would leave (0,1)
/// or produce a nonpositive Jacobian factor is retried at dt/2 (at most 20
/// halvings). Accepted states are always interior.
Trajectory evolve_nonlinear(const NonlinearTimeModel& model, std::span<const double> a0,
                            long* halving_count = nullptr);

/// Exact log-det of the diagonal part of the discrete Euler Jacobian chain:
/// -sum ln(1 + b'_i(a(t)) dt).
double nonlinear_nll(const Trajectory& traj);

/// Continuum form -sum b'_i(a(t)) dt; agrees with the discrete form to O(dt).
double nonlinear_nll_continuum(const Trajectory& traj);

struct TimeLocalLossTable {
  std::vector<std::vector<double>> losses;  // per step, per node: -b'_i(a(t))
  double sum_times_dt = 0.0;                // equals the continuum total exactly
};
TimeLocalLossTable nonlinear_local_losses(const Trajectory& traj);

/// Superposition residual of the bias-shifted rollout map on random interior
/// points; near zero only for the linear model.
double linearity_residual(const LinearTimeModel& model, CounterRng& rng, int trials = 20);
double linearity_residual(const NonlinearTimeModel& model, CounterRng& rng, int trials = 20);

struct TrainedTimeModel {
  NonlinearTimeModel model;
  std::vector<double> col_min, col_max;  // data scaling into (delta, 1-delta)
  RunReport report;
};

TrainedTimeModel train_time_model(const Dataset& data, const TrainConfig& config);

/// Mean nll over the dataset with fresh auxiliary draws (deterministic via seed).
double evaluate_time_model(const NonlinearTimeModel& model,
                           const std::vector<std::vector<double>>& scaled_rows,
                           std::uint64_t seed);

/// Scales a raw data row into the model's (delta, 1-delta) box.
std::vector<double> scale_row(const TrainedTimeModel& trained, std::span<const double> raw);

/// Monte-Carlo recovery of the input density on model-scale grid points
/// (m coordinates each); with Uniform(0,1) auxiliaries the divisor is one.
std::vector<double> recover_input_density(const NonlinearTimeModel& model,
                                          const std::vector<std::vector<double>>& grid_points,
                                          int n_mc, std::uint64_t seed);

nlohmann::json nonlinear_model_to_json(const NonlinearTimeModel& model);
NonlinearTimeModel nonlinear_model_from_json(const nlohmann::json& j);

inline constexpr double kInteriorMargin = 1e-3;  // data scaled into (delta, 1-delta)

}  // namespace probe
