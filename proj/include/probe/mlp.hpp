#pragma once

#include <span>
#include <vector>

#include "probe/rng.hpp"

namespace probe {

/// Plain feedforward net: tanh hidden layers, linear output. Used wherever a
/// model needs an unconstrained function of the conditioning input.
struct Mlp {
  std::vector<int> widths;    // {in, hidden..., out}
  std::vector<double> theta;  // per layer: weights row-major, then biases

  std::size_t n_params() const;
  std::size_t layer_offset(std::size_t layer) const;  // offset of layer's weights
};

Mlp make_mlp(std::vector<int> widths, CounterRng& rng);

/// Reusable per-sample buffers for forward/backward.
struct MlpWork {
  std::vector<std::vector<double>> h;    // h[0]=input copy, h[l]=layer output
  std::vector<std::vector<double>> pre;  // preactivation per layer
  std::vector<std::vector<double>> adj;  // adjoint scratch per layer output
};

void mlp_forward(const Mlp& net, std::span<const double> x, MlpWork& work);

/// Accumulates dL/dtheta into grad given dL/d(output); also leaves
/// dL/d(input) in work.adj[0] for callers that chain further back.
void mlp_backward(const Mlp& net, MlpWork& work, std::span<const double> out_adj,
                  std::span<double> grad);

}  // namespace probe
