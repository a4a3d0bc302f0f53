#include <doctest.h>

#include <cmath>

#include "probe/core.hpp"
#include "probe/errors.hpp"
#include "probe/numeric.hpp"
#include "probe/rng.hpp"

using namespace probe;

namespace {

TrainConfig discrete_config() {
  TrainConfig cfg;
  cfg.optimizer = "sgd";
  cfg.learning_rate = 1.0;
  cfg.epochs = 20000;
  cfg.loss_tol = 1e-14;
  return cfg;
}

}  // namespace

TEST_CASE("log_loss") {
  CHECK(log_loss(1.0) == 0.0);
  CHECK(log_loss(std::exp(-2.0)) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK_THROWS_AS(log_loss(0.0), NumericError);
  CHECK_THROWS_AS(log_loss(-1.0), NumericError);
}

TEST_CASE("log_loss additivity over products") {
  CounterRng rng(3);
  double worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const double a = std::exp(rng.uniform(-6.0, 6.0));
    const double b = std::exp(rng.uniform(-6.0, 6.0));
    worst = std::max(worst, std::abs(log_loss(a * b) - (log_loss(a) + log_loss(b))));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("expected_loss") {
  SUBCASE("constant model phi=1") {
    const Dataset data = make_numeric_dataset({{"x", {1.0, 2.0, 3.0}}});
    CHECK(expected_loss(data, [](std::size_t) { return 1.0; }) == 0.0);
  }
  SUBCASE("mean of exponents") {
    const Dataset data = make_numeric_dataset({{"x", {0.0, 1.0}}});
    const double loss = expected_loss(data, [](std::size_t i) {
      return i == 0 ? std::exp(-1.0) : std::exp(-3.0);
    });
    CHECK(loss == doctest::Approx(2.0).epsilon(1e-14));
  }
  SUBCASE("empirical-frequency model on counts [3,1]") {
    // Oracle: -0.75 ln 0.75 - 0.25 ln 0.25 computed by scalar arithmetic.
    const double oracle = -(0.75 * std::log(0.75) + 0.25 * std::log(0.25));
    const Dataset data =
        make_categorical_dataset("k", {"a", "a", "a", "b"});
    const double loss = expected_loss(data, [&](std::size_t i) {
      return data.column("k").codes[i] == 0 ? 0.75 : 0.25;
    });
    CHECK(loss == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(loss == doctest::Approx(0.5623).epsilon(1e-3));
  }
  SUBCASE("domain error carries the sample index") {
    const Dataset data = make_numeric_dataset({{"x", {1.0, 2.0}}});
    CHECK_THROWS_WITH_AS(
        expected_loss(data, [](std::size_t i) { return i == 1 ? 0.0 : 1.0; }),
        doctest::Contains("sample 1"), NumericError);
  }
}

TEST_CASE("softmax probabilities sum to one (property)") {
  CounterRng rng(17);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> logits(1 + rng.uniform_int(16));
    for (double& v : logits) v = rng.uniform(-20.0, 20.0);
    const std::vector<double> p = softmax(logits);
    worst = std::max(worst, std::abs(kahan_sum(p) - 1.0));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("fit_discrete") {
  SUBCASE("symmetric counts") {
    const Dataset data = make_categorical_dataset("k", {"a", "b"});
    const DiscreteEstimator est = fit_discrete(data, "k", discrete_config());
    const std::vector<double> p = est.probabilities();
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-8));
  }
  SUBCASE("counts [3,1] converge to the frequency oracle") {
    const Dataset data = make_categorical_dataset("k", {"a", "a", "a", "b"});
    const DiscreteEstimator est = fit_discrete(data, "k", discrete_config());
    CHECK(est.prob_of("a") == doctest::Approx(0.75).epsilon(1e-5));
    CHECK(est.prob_of("b") == doctest::Approx(0.25).epsilon(1e-5));
  }
  SUBCASE("degenerate single-category support") {
    const Dataset data = make_categorical_dataset("k", {"a", "a", "a", "a", "a"});
    const DiscreteEstimator est = fit_discrete(data, "k", discrete_config());
    CHECK(est.probabilities() == std::vector<double>{1.0});
  }
  SUBCASE("empty dataset") {
    const Dataset data = make_categorical_dataset("k", {});
    CHECK_THROWS_AS(fit_discrete(data, "k", discrete_config()), ValidationError);
  }
  SUBCASE("category outside declared support") {
    const Dataset data = make_categorical_dataset("k", {"a", "c"});
    CHECK_THROWS_AS(fit_discrete(data, "k", discrete_config(), {"a", "b"}), ValidationError);
  }
}

TEST_CASE("fit_discrete converges to empirical frequencies (property, K<=16)") {
  CounterRng rng(23);
  for (int trial = 0; trial < 8; ++trial) {
    const int k = 2 + static_cast<int>(rng.uniform_int(15));
    std::vector<std::string> values;
    std::vector<double> counts(static_cast<std::size_t>(k));
    double total = 0.0;
    for (int c = 0; c < k; ++c) {
      const int count = 1 + static_cast<int>(rng.uniform_int(20));
      counts[static_cast<std::size_t>(c)] = count;
      total += count;
      for (int i = 0; i < count; ++i) values.push_back("k" + std::to_string(c));
    }
    const Dataset data = make_categorical_dataset("k", values);
    const DiscreteEstimator est = fit_discrete(data, "k", discrete_config());
    const std::vector<double> p = est.probabilities();
    double worst = 0.0;
    for (int c = 0; c < k; ++c) {
      worst = std::max(worst, std::abs(p[static_cast<std::size_t>(c)] -
                                       counts[static_cast<std::size_t>(c)] / total));
    }
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("expected_loss of the fitted estimator equals the empirical entropy") {
  const Dataset data =
      make_categorical_dataset("k", {"a", "a", "a", "b", "b", "c", "c", "c", "c", "c"});
  const DiscreteEstimator est = fit_discrete(data, "k", discrete_config());
  const double loss = expected_loss(data, [&](std::size_t i) {
    return est.probabilities()[static_cast<std::size_t>(data.column("k").codes[i])];
  });
  double entropy = 0.0;
  for (double f : {0.3, 0.2, 0.5}) entropy -= f * std::log(f);
  CHECK(loss == doctest::Approx(entropy).epsilon(1e-4));
}

TEST_CASE("fit_discrete_conditional") {
  SUBCASE("counting oracle on mixed conditions") {
    std::vector<Column> cols(2);
    cols[0].name = "a";
    cols[0].type = ColumnType::categorical;
    cols[0].categories = {"0", "1"};
    cols[0].codes = {0, 0, 0, 1};
    cols[1].name = "b";
    cols[1].type = ColumnType::categorical;
    cols[1].categories = {"A", "B"};
    cols[1].codes = {0, 0, 1, 1};
    const Dataset data(std::move(cols));
    const ConditionalTable table = fit_discrete_conditional(data, "a", "b", discrete_config());
    CHECK(table.row_for("0").prob_of("B") == doctest::Approx(1.0 / 3.0).epsilon(1e-5));
    // Zero-count outcomes push the optimum to infinity in logit space; plain
    // gradient descent closes the gap like 1/steps.
    CHECK(table.row_for("1").prob_of("B") == doctest::Approx(1.0).epsilon(1e-3));
    // Per-condition rows sum to 1.
    for (const DiscreteEstimator& row : table.rows) {
      CHECK(kahan_sum(row.probabilities()) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("single condition, uniform outcomes") {
    std::vector<Column> cols(2);
    cols[0].name = "a";
    cols[0].type = ColumnType::categorical;
    cols[0].categories = {"0"};
    cols[0].codes = {0, 0};
    cols[1].name = "b";
    cols[1].type = ColumnType::categorical;
    cols[1].categories = {"A", "B"};
    cols[1].codes = {0, 1};
    const Dataset data(std::move(cols));
    const ConditionalTable table = fit_discrete_conditional(data, "a", "b", discrete_config());
    const std::vector<double> p = table.row_for("0").probabilities();
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-8));
  }
  SUBCASE("unseen condition at query time") {
    std::vector<Column> cols(2);
    cols[0].name = "a";
    cols[0].type = ColumnType::categorical;
    cols[0].categories = {"0", "1"};
    cols[0].codes = {0, 1};
    cols[1].name = "b";
    cols[1].type = ColumnType::categorical;
    cols[1].categories = {"A"};
    cols[1].codes = {0, 0};
    const Dataset data(std::move(cols));
    const ConditionalTable table = fit_discrete_conditional(data, "a", "b", discrete_config());
    CHECK_THROWS_WITH_AS(table.row_for("2"), doctest::Contains("unseen condition"),
                         ValidationError);
  }
}

TEST_CASE("discrete estimator JSON round trip") {
  DiscreteEstimator est;
  est.support = {"x", "y", "z"};
  est.logits = {0.1, -2.3456789012345, 7.0};
  const DiscreteEstimator back = DiscreteEstimator::from_json(est.to_json());
  CHECK(back.support == est.support);
  for (std::size_t i = 0; i < est.logits.size(); ++i) CHECK(back.logits[i] == est.logits[i]);
}
