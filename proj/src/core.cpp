#include "probe/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "probe/errors.hpp"
#include "probe/numeric.hpp"
#include "probe/optim.hpp"

namespace probe {

double log_loss(double phi) {
  if (!(phi > 0.0)) {
    throw NumericError("log_loss: model function value must be positive, got " +
                       std::to_string(phi));
  }
  return -std::log(phi);
}

std::vector<double> softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

double expected_loss(const Dataset& data, const std::function<double(std::size_t)>& phi) {
  if (data.n_rows() == 0) {
    throw ValidationError("expected_loss: empty dataset");
  }
  std::vector<double> losses(data.n_rows());
  for (std::size_t i = 0; i < data.n_rows(); ++i) {
    try {
      losses[i] = log_loss(phi(i));
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " (sample " + std::to_string(i) + ")");
    }
  }
  return kahan_sum(losses) / static_cast<double>(data.n_rows());
}

std::vector<double> DiscreteEstimator::probabilities() const { return softmax(logits); }

double DiscreteEstimator::prob_of(const std::string& outcome) const {
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (support[i] == outcome) return probabilities()[i];
  }
  throw ValidationError("outcome '" + outcome + "' is outside the declared support");
}

nlohmann::json DiscreteEstimator::to_json() const {
  return nlohmann::json{{"support", support}, {"logits", logits}};
}

DiscreteEstimator DiscreteEstimator::from_json(const nlohmann::json& j) {
  DiscreteEstimator e;
  e.support = j.at("support").get<std::vector<std::string>>();
  e.logits = j.at("logits").get<std::vector<double>>();
  if (e.support.size() != e.logits.size() || e.support.empty()) {
    throw ValidationError("discrete estimator: support/logits size mismatch");
  }
  return e;
}

namespace {

// Counts per support entry; extends the support when none was declared.
std::vector<double> outcome_frequencies(const std::vector<int>& codes,
                                        const std::vector<std::string>& categories,
                                        std::vector<std::string>& support) {
  if (support.empty()) support = categories;
  std::vector<double> counts(support.size(), 0.0);
  for (int code : codes) {
    const std::string& value = categories[static_cast<std::size_t>(code)];
    const auto it = std::find(support.begin(), support.end(), value);
    if (it == support.end()) {
      throw ValidationError("category '" + value + "' is outside the declared support");
    }
    counts[static_cast<std::size_t>(it - support.begin())] += 1.0;
  }
  const double total = kahan_sum(counts);
  for (double& c : counts) c /= total;
  return counts;
}

// Descends the expected log loss over softmax probabilities until the loss
// change per epoch drops below tolerance.
DiscreteEstimator fit_to_frequencies(std::vector<std::string> support,
                                     const std::vector<double>& freq, const TrainConfig& config) {
  DiscreteEstimator est;
  est.support = std::move(support);
  est.logits.assign(est.support.size(), 0.0);

  OptimizerState opt = make_optimizer(config.optimizer, config.learning_rate);
  std::vector<double> grad(est.logits.size());
  double prev_loss = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<double> p = softmax(est.logits);
    double loss = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      grad[k] = p[k] - freq[k];
      if (freq[k] > 0.0) loss -= freq[k] * std::log(p[k]);
    }
    sgd_step(est.logits, grad, opt);
    if (std::abs(prev_loss - loss) < config.loss_tol) break;
    prev_loss = loss;
  }
  return est;
}

}  // namespace

DiscreteEstimator fit_discrete(const Dataset& data, const std::string& column,
                               const TrainConfig& config, std::vector<std::string> support) {
  const Column& col = data.column(column);
  if (col.type != ColumnType::categorical) {
    throw ValidationError("fit_discrete: column '" + column + "' is not categorical");
  }
  if (col.codes.empty()) {
    throw ValidationError("fit_discrete: empty dataset");
  }
  const std::vector<double> freq = outcome_frequencies(col.codes, col.categories, support);
  return fit_to_frequencies(std::move(support), freq, config);
}

const DiscreteEstimator& ConditionalTable::row_for(const std::string& condition) const {
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    if (conditions[i] == condition) return rows[i];
  }
  throw ValidationError("unseen condition '" + condition + "'");
}

ConditionalTable fit_discrete_conditional(const Dataset& data, const std::string& condition_column,
                                          const std::string& outcome_column,
                                          const TrainConfig& config) {
  const Column& cond = data.column(condition_column);
  const Column& out = data.column(outcome_column);
  if (cond.type != ColumnType::categorical || out.type != ColumnType::categorical) {
    throw ValidationError("fit_discrete_conditional: both columns must be categorical");
  }
  if (cond.codes.empty()) {
    throw ValidationError("fit_discrete_conditional: empty dataset");
  }
  ConditionalTable table;
  table.conditions = cond.categories;
  for (std::size_t c = 0; c < table.conditions.size(); ++c) {
    std::vector<int> codes;
    for (std::size_t r = 0; r < cond.codes.size(); ++r) {
      if (cond.codes[r] == static_cast<int>(c)) codes.push_back(out.codes[r]);
    }
    std::vector<std::string> support = out.categories;  // shared outcome support
    const std::vector<double> freq = outcome_frequencies(codes, out.categories, support);
    table.rows.push_back(fit_to_frequencies(std::move(support), freq, config));
  }
  return table;
}

}  // namespace probe
