#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "probe/config.hpp"
#include "probe/dataset.hpp"
#include "probe/matrix.hpp"
#include "probe/mlp.hpp"
#include "probe/rng.hpp"

namespace probe {

/// Equal-width stack of lower-triangular monotone maps. Interior maps use a
/// centered sigmoid with a linear leak (the positive diagonal skip), the
/// final map squashes each coordinate to (0,1). The composite Jacobian is
/// lower triangular with diagonal equal to the product of per-map diagonals.
struct TriangularFlow {
  int n = 0;
  int depth = 0;      // interior map count; total maps = depth + 1
  double leak = 0.1;  // linear skip gain inside interior activations
  std::vector<double> theta;  // per map: tri row-major (j>k), diag_free, bias
  std::vector<double> std_mean, std_std;  // per coordinate

  std::size_t n_maps() const { return static_cast<std::size_t>(depth) + 1; }
  std::size_t params_per_map() const {
    return static_cast<std::size_t>(n) * (n - 1) / 2 + 2 * static_cast<std::size_t>(n);
  }
  std::size_t map_offset(std::size_t m) const { return m * params_per_map(); }
  std::size_t n_params() const { return n_maps() * params_per_map(); }
};

TriangularFlow make_triangular_flow(int n, int depth, CounterRng& rng, double leak = 0.1);

struct FlowForward {
  std::vector<double> out;  // b in (0,1)^n
  DenseMatrix diag;         // (depth+1) x n per-map diagonal derivatives, > 0
};

/// Forward pass in data space; per-map per-node diagonal derivatives include
/// the standardization Jacobian on the first map.
FlowForward forward_flow(const TriangularFlow& net, std::span<const double> a);

/// Per-node localized losses -ln(diag); sum is exactly the global nll
/// (same terms, same order).
struct LocalLossTable {
  DenseMatrix losses;  // (depth+1) x n
  double sum = 0.0;
};

LocalLossTable local_losses(const TriangularFlow& net, std::span<const double> a);

/// -sum ln(diag); O(depth * n^2), no determinant routine involved.
double nll_nd(const TriangularFlow& net, std::span<const double> a);

/// Composite diagonal per coordinate: the autoregressive conditional density
/// of a_i given its predecessors. Product equals exp(-nll).
std::vector<double> autoregressive_conditionals(const TriangularFlow& net,
                                                std::span<const double> a);

double density_nd(const TriangularFlow& net, std::span<const double> a);

/// Accumulates gradients of the mean nll over samples. mode_local restricts
/// each map's updates to its own localized loss terms (incoming activations
/// treated as constants; no cross-map adjoint flow).
double nll_gradient_nd(const TriangularFlow& net, const std::vector<std::vector<double>>& samples,
                       std::span<double> grad, bool mode_local);

std::pair<TriangularFlow, RunReport> train_nd(const Dataset& data, const TrainConfig& config,
                                              std::vector<std::string> columns = {});

/// Triangular flow over targets t plus an unconstrained conditioning network
/// applying additive per-map shifts to every node. Shifts never depend on t,
/// so triangularity in t is exact.
struct ConditionalFlow {
  TriangularFlow flow;  // over t coordinates
  Mlp conditioner;      // x -> (depth+1)*n shifts
  std::vector<double> x_mean, x_std;
};

FlowForward forward_conditional(const ConditionalFlow& net, std::span<const double> x,
                                std::span<const double> t);

double conditional_nll(const ConditionalFlow& net, std::span<const double> x,
                       std::span<const double> t);

/// Conditional density of t given x, in data space.
double conditional_density(const ConditionalFlow& net, std::span<const double> x,
                           std::span<const double> t);

std::pair<ConditionalFlow, RunReport> train_conditional(const Dataset& data,
                                                        const std::vector<std::string>& x_columns,
                                                        const std::vector<std::string>& t_columns,
                                                        const TrainConfig& config);

nlohmann::json triangular_flow_to_json(const TriangularFlow& net);
TriangularFlow triangular_flow_from_json(const nlohmann::json& j);
nlohmann::json conditional_flow_to_json(const ConditionalFlow& net);
ConditionalFlow conditional_flow_from_json(const nlohmann::json& j);

}  // namespace probe
