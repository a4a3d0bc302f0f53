#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "probe/config.hpp"
#include "probe/dataset.hpp"
#include "probe/dual.hpp"
#include "probe/matrix.hpp"
#include "probe/numeric.hpp"
#include "probe/rng.hpp"

namespace probe {

/// Grid comparison between a reference density and an estimate. L1 is the
/// trapezoid integral of |difference|; KL carries a 1e-12 floor on both
/// densities and is reported alongside the unfloored L1.
struct GridDensityComparison {
  std::vector<double> grid;
  std::vector<double> reference;
  std::vector<double> estimate;
  double l1 = 0.0;
  double kl = 0.0;
  double max_abs = 0.0;
};

GridDensityComparison compare_densities(const std::function<double(double)>& reference,
                                        const std::function<double(double)>& estimate,
                                        std::span<const double> grid);

/// Sample mean and biased (divide-by-N) maximum-likelihood variance.
std::pair<double, double> closed_form_mle_gaussian(std::span<const double> xs);

/// Counting estimate of P(outcome | condition); rows sum to one.
struct EmpiricalConditional {
  std::vector<std::string> conditions;
  std::vector<std::string> outcomes;
  DenseMatrix table;  // conditions x outcomes

  double prob(const std::string& condition, const std::string& outcome) const;
};

EmpiricalConditional empirical_conditional(const Dataset& data, const std::string& condition_column,
                                           const std::string& outcome_column);

/// Scalar net monotone in both inputs: the n=2 instance of the mixed-
/// derivative construction, tractable only at this scale. Density is the
/// second mixed partial of the output, evaluated with nested duals.
struct MixedMonotoneNet2D {
  int hidden = 8;
  std::vector<double> w1_free, w2_free, v_free, bias;  // positive via softplus
  double g1_free = 0.0, g2_free = 0.0;                 // positive corner skips
  double out_bias = 0.0;
};

MixedMonotoneNet2D make_mixed_net(int hidden, CounterRng& rng);

template <typename T>
T mixed_net_forward(const MixedMonotoneNet2D& net, const T& a1, const T& a2) {
  const double floor = 1e-6;
  T pre = net.out_bias + (softplus(net.g1_free) + floor) * a1 +
          (softplus(net.g2_free) + floor) * a2;
  for (int k = 0; k < net.hidden; ++k) {
    const std::size_t sk = static_cast<std::size_t>(k);
    const T u = (softplus(net.w1_free[sk]) + floor) * a1 +
                (softplus(net.w2_free[sk]) + floor) * a2 + net.bias[sk];
    pre = pre + (softplus(net.v_free[sk]) + floor) * sigmoid(u);
  }
  return sigmoid(pre);
}

/// d^2 y / da1 da2 via nested duals.
double mixed_density_2d(const MixedMonotoneNet2D& net, double a1, double a2);

nlohmann::json verification_report(const std::vector<CheckResult>& checks);

}  // namespace probe
