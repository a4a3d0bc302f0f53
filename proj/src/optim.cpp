#include "probe/optim.hpp"

#include <cmath>
#include <string>

#include "probe/errors.hpp"

namespace probe {

OptimizerState make_optimizer(const std::string& tag, double learning_rate) {
  OptimizerState state;
  state.learning_rate = learning_rate;
  if (tag == "sgd") {
    state.kind = OptimizerKind::sgd;
  } else if (tag == "rmsprop") {
    state.kind = OptimizerKind::rmsprop;
  } else {
    throw ValidationError("unknown optimizer tag: " + tag);
  }
  return state;
}

void sgd_step(std::vector<double>& params, std::span<const double> grads, OptimizerState& state) {
  if (params.size() != grads.size()) {
    throw ValidationError("sgd_step: parameter/gradient shape mismatch");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError("sgd_step: non-finite gradient at parameter " + std::to_string(i));
    }
  }
  if (state.kind == OptimizerKind::rmsprop && state.accumulator.size() != params.size()) {
    state.accumulator.assign(params.size(), 0.0);
  }
  ++state.step_count;
  switch (state.kind) {
    case OptimizerKind::sgd:
      for (std::size_t i = 0; i < params.size(); ++i) {
        params[i] -= state.learning_rate * grads[i];
      }
      break;
    case OptimizerKind::rmsprop:
      for (std::size_t i = 0; i < params.size(); ++i) {
        double& acc = state.accumulator[i];
        acc = state.rms_decay * acc + (1.0 - state.rms_decay) * grads[i] * grads[i];
        params[i] -= state.learning_rate * grads[i] / (std::sqrt(acc) + state.epsilon);
      }
      break;
  }
}

}  // namespace probe
