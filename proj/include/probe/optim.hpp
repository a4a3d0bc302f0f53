#pragma once

#include <span>
#include <string>
#include <vector>

namespace probe {

enum class OptimizerKind { sgd, rmsprop };

/// Per-parameter-vector optimizer state. Exclusively owned by one training
/// loop; updates are deterministic given the state.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::rmsprop;
  double learning_rate = 1e-2;
  double rms_decay = 0.9;
  double epsilon = 1e-8;
  std::vector<double> accumulator;  // sized on first step
  long step_count = 0;
};

OptimizerState make_optimizer(const std::string& tag, double learning_rate);

/// params <- params - lr * (adaptive-scaled grads).
void sgd_step(std::vector<double>& params, std::span<const double> grads, OptimizerState& state);

}  // namespace probe
