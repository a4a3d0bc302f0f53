#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "probe/config.hpp"
#include "probe/dataset.hpp"

namespace probe {

/// Self-information loss -ln(phi). Requires phi > 0.
double log_loss(double phi);

std::vector<double> softmax(std::span<const double> logits);

/// Mean log loss over a dataset; phi(row) must be strictly positive for
/// every row. Compensated summation keeps the value order-robust to 1e-12.
double expected_loss(const Dataset& data, const std::function<double(std::size_t)>& phi);

/// Softmax-normalized estimator over a discrete support; the normalization
/// condition holds by construction.
struct DiscreteEstimator {
  std::vector<std::string> support;
  std::vector<double> logits;

  std::vector<double> probabilities() const;
  double prob_of(const std::string& outcome) const;  // ValidationError when outside support

  nlohmann::json to_json() const;
  static DiscreteEstimator from_json(const nlohmann::json& j);
};

/// Gradient descent on the expected log loss of softmax probabilities.
/// Converges to the empirical frequencies (the closed-form optimum).
DiscreteEstimator fit_discrete(const Dataset& data, const std::string& column,
                               const TrainConfig& config,
                               std::vector<std::string> support = {});

/// One outcome distribution per observed condition value.
struct ConditionalTable {
  std::vector<std::string> conditions;
  std::vector<DiscreteEstimator> rows;

  const DiscreteEstimator& row_for(const std::string& condition) const;  // unseen -> error
};

ConditionalTable fit_discrete_conditional(const Dataset& data, const std::string& condition_column,
                                          const std::string& outcome_column,
                                          const TrainConfig& config);

}  // namespace probe
