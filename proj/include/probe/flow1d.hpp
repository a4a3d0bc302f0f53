#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "probe/config.hpp"
#include "probe/dataset.hpp"
#include "probe/rng.hpp"

namespace probe {

enum class Activation { sigmoid, tanh, softplus };

Activation activation_from_tag(const std::string& tag);
std::string activation_tag(Activation a);

/// Activation value with first and second derivatives. The second derivative
/// feeds the derivative-channel backprop (the loss differentiates the model
/// with respect to its input before parameters).
struct ActEval {
  double f;
  double d1;
  double d2;
};
ActEval eval_activation(Activation a, double u);

/// Feedforward net with softplus-positive weights, monotone activations, a
/// final sigmoid, and a positive input->final-preactivation skip. Its output
/// is a CDF estimate; the input derivative is the density.
struct MonotoneNet {
  std::vector<int> widths;  // {1, hidden..., 1}
  Activation activation = Activation::sigmoid;
  std::vector<double> theta;  // free params: per hidden layer W then b; out W, out b, skip
  double standardize_mean = 0.0;
  double standardize_std = 1.0;

  std::size_t n_params() const;
};

MonotoneNet make_monotone_net(const std::vector<int>& hidden_widths, Activation activation,
                              CounterRng& rng);

struct Forward1d {
  double y;     // CDF estimate in (0,1)
  double dydx;  // density estimate, strictly positive
};

/// Evaluates the CDF and its input derivative (dual forward pass), both in
/// data space (standardization folded in).
Forward1d forward_cdf(const MonotoneNet& net, double x);

/// -ln(dy/dx); throws NumericError when the derivative underflows (<= 1e-300).
double nll_1d(const MonotoneNet& net, double x);

double mean_nll_1d(const MonotoneNet& net, std::span<const double> xs);

/// Accumulates d(mean nll)/d(theta) over the given samples into grad.
/// Returns the mean data-space nll; clamp_count counts underflow clamps.
double nll_gradient_1d(const MonotoneNet& net, std::span<const double> xs,
                       std::span<double> grad, long* clamp_count = nullptr);

struct DensityEstimate1D {
  std::vector<double> grid;
  std::vector<double> phi;
  std::vector<double> cdf;
};

DensityEstimate1D density_grid(const MonotoneNet& net, double x_min, double x_max, int n_points);

/// Inverse-CDF sample by bisection.
double sample_inverse_cdf(const MonotoneNet& net, double u);

std::pair<MonotoneNet, RunReport> train_1d(const Dataset& data, const TrainConfig& config,
                                           const std::string& column = "");

nlohmann::json monotone_net_to_json(const MonotoneNet& net);
MonotoneNet monotone_net_from_json(const nlohmann::json& j);

}  // namespace probe
