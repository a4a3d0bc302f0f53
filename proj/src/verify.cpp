#include "probe/verify.hpp"

#include <algorithm>
#include <cmath>

#include "probe/errors.hpp"

namespace probe {

GridDensityComparison compare_densities(const std::function<double(double)>& reference,
                                        const std::function<double(double)>& estimate,
                                        std::span<const double> grid) {
  if (grid.size() < 2) {
    throw ValidationError("compare_densities: grid needs at least 2 points");
  }
  GridDensityComparison cmp;
  cmp.grid.assign(grid.begin(), grid.end());
  cmp.reference.resize(grid.size());
  cmp.estimate.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    cmp.reference[i] = reference(grid[i]);
    cmp.estimate[i] = estimate(grid[i]);
    if (cmp.reference[i] < 0.0 || cmp.estimate[i] < 0.0) {
      throw ValidationError("compare_densities: negative density at grid point " +
                            std::to_string(grid[i]));
    }
    cmp.max_abs = std::max(cmp.max_abs, std::abs(cmp.reference[i] - cmp.estimate[i]));
  }
  constexpr double kFloor = 1e-12;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double h = grid[i + 1] - grid[i];
    const double d0 = std::abs(cmp.reference[i] - cmp.estimate[i]);
    const double d1 = std::abs(cmp.reference[i + 1] - cmp.estimate[i + 1]);
    cmp.l1 += 0.5 * h * (d0 + d1);
    const double p0 = std::max(cmp.reference[i], kFloor);
    const double q0 = std::max(cmp.estimate[i], kFloor);
    const double p1 = std::max(cmp.reference[i + 1], kFloor);
    const double q1 = std::max(cmp.estimate[i + 1], kFloor);
    cmp.kl += 0.5 * h * (p0 * std::log(p0 / q0) + p1 * std::log(p1 / q1));
  }
  return cmp;
}

std::pair<double, double> closed_form_mle_gaussian(std::span<const double> xs) {
  if (xs.empty()) {
    throw ValidationError("closed_form_mle_gaussian: empty data");
  }
  const double mean = kahan_sum(xs) / static_cast<double>(xs.size());
  std::vector<double> sq(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - mean) * (xs[i] - mean);
  return {mean, kahan_sum(sq) / static_cast<double>(xs.size())};
}

double EmpiricalConditional::prob(const std::string& condition, const std::string& outcome) const {
  const auto ci = std::find(conditions.begin(), conditions.end(), condition);
  const auto oi = std::find(outcomes.begin(), outcomes.end(), outcome);
  if (ci == conditions.end() || oi == outcomes.end()) {
    throw ValidationError("empirical conditional: unknown condition or outcome");
  }
  return table(static_cast<std::size_t>(ci - conditions.begin()),
               static_cast<std::size_t>(oi - outcomes.begin()));
}

EmpiricalConditional empirical_conditional(const Dataset& data,
                                           const std::string& condition_column,
                                           const std::string& outcome_column) {
  const Column& cond = data.column(condition_column);
  const Column& out = data.column(outcome_column);
  if (cond.codes.empty()) {
    throw ValidationError("empirical_conditional: empty data");
  }
  EmpiricalConditional ec;
  ec.conditions = cond.categories;
  ec.outcomes = out.categories;
  ec.table = DenseMatrix(ec.conditions.size(), ec.outcomes.size());
  std::vector<double> row_totals(ec.conditions.size(), 0.0);
  for (std::size_t r = 0; r < cond.codes.size(); ++r) {
    ec.table(static_cast<std::size_t>(cond.codes[r]), static_cast<std::size_t>(out.codes[r])) +=
        1.0;
    row_totals[static_cast<std::size_t>(cond.codes[r])] += 1.0;
  }
  for (std::size_t i = 0; i < ec.conditions.size(); ++i) {
    for (std::size_t j = 0; j < ec.outcomes.size(); ++j) ec.table(i, j) /= row_totals[i];
  }
  return ec;
}

MixedMonotoneNet2D make_mixed_net(int hidden, CounterRng& rng) {
  MixedMonotoneNet2D net;
  net.hidden = hidden;
  const double center = std::log(std::expm1(0.8));
  for (int k = 0; k < hidden; ++k) {
    net.w1_free.push_back(center + 0.3 * rng.normal());
    net.w2_free.push_back(center + 0.3 * rng.normal());
    net.v_free.push_back(std::log(std::expm1(2.0 / hidden)) + 0.2 * rng.normal());
    net.bias.push_back(rng.uniform(-2.0, 2.0));
  }
  net.g1_free = std::log(std::expm1(1.0));
  net.g2_free = std::log(std::expm1(1.0));
  net.out_bias = 0.0;
  return net;
}

double mixed_density_2d(const MixedMonotoneNet2D& net, double a1, double a2) {
  return mixed_partial_2d(
      [&](const Dual<Dual<double>>& x1, const Dual<Dual<double>>& x2) {
        return mixed_net_forward(net, x1, x2);
      },
      a1, a2);
}

nlohmann::json verification_report(const std::vector<CheckResult>& checks) {
  nlohmann::json arr = nlohmann::json::array();
  for (const CheckResult& c : checks) arr.push_back(to_json(c));
  return arr;
}

}  // namespace probe
