#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "probe/config.hpp"
#include "probe/dataset.hpp"
#include "probe/matrix.hpp"
#include "probe/mlp.hpp"

namespace probe {

/// Feature network with a softmax output; probabilities sum to one per input
/// by construction. The log loss of the true label is identical to one-hot
/// cross-entropy.
struct SoftmaxClassifier {
  Mlp net;
  std::vector<std::string> labels;
  std::vector<double> x_mean, x_std;
};

std::vector<double> classify_probs(const SoftmaxClassifier& clf, std::span<const double> x);
double classifier_nll(const SoftmaxClassifier& clf, std::span<const double> x,
                      const std::string& label);

std::pair<SoftmaxClassifier, RunReport> train_classifier(const Dataset& data,
                                                         const std::vector<std::string>& features,
                                                         const std::string& label_column,
                                                         const TrainConfig& config);

/// Gaussian parameters produced by a regression head: mean vector and the
/// lower-triangular factor L with Sigma = L L^T (positive diagonal, so Sigma
/// is symmetric positive definite by construction).
struct GaussianParams {
  std::vector<double> mu;
  DenseMatrix chol;
};

/// Full NLL including the n/2 ln(2 pi) constant, solved through the
/// triangular factor -- no explicit inverse is ever formed.
double gaussian_nll(const GaussianParams& p, std::span<const double> t);

struct GaussianHead {
  Mlp net;  // x -> [mu, raw L entries]; diagonal mapped positive via softplus
  int n_targets = 1;
  bool identity_cov = false;  // Sigma fixed to I: the MSE special case
  std::vector<double> x_mean, x_std;
};

GaussianParams head_params(const GaussianHead& head, std::span<const double> x);

std::pair<GaussianHead, RunReport> train_regression(const Dataset& data,
                                                    const std::vector<std::string>& x_columns,
                                                    const std::vector<std::string>& t_columns,
                                                    const TrainConfig& config,
                                                    bool identity_cov = false);

/// A named density family; the model is the parameter vector itself.
struct ParametricFamily {
  std::string name;
  int dim = 0;
  std::function<double(std::span<const double> theta, double x)> log_pdf;
  /// Writes d(-log pdf)/d(theta) into grad.
  std::function<void(std::span<const double> theta, double x, std::span<double> grad)> nll_grad;
  std::function<std::vector<double>(std::span<const double> xs)> init;
};

/// theta = (mean, log_std).
ParametricFamily gaussian1d_family();

/// Per-sample streaming updates on -ln P(x|theta); one sample per step, no
/// sums over the dataset. Converges to the batch maximum-likelihood optimum.
std::pair<std::vector<double>, RunReport> estimate_params(const Dataset& data,
                                                          const std::string& column,
                                                          const ParametricFamily& family,
                                                          const TrainConfig& config);

nlohmann::json classifier_to_json(const SoftmaxClassifier& clf);
SoftmaxClassifier classifier_from_json(const nlohmann::json& j);
nlohmann::json gaussian_head_to_json(const GaussianHead& head);
GaussianHead gaussian_head_from_json(const nlohmann::json& j);

}  // namespace probe
