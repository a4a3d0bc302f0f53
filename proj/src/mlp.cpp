#include "probe/mlp.hpp"

#include <cmath>

#include "probe/errors.hpp"

namespace probe {

std::size_t Mlp::n_params() const {
  std::size_t n = 0;
  for (std::size_t l = 1; l < widths.size(); ++l) {
    n += static_cast<std::size_t>(widths[l]) * widths[l - 1] + widths[l];
  }
  return n;
}

std::size_t Mlp::layer_offset(std::size_t layer) const {
  std::size_t off = 0;
  for (std::size_t l = 1; l < layer; ++l) {
    off += static_cast<std::size_t>(widths[l]) * widths[l - 1] + widths[l];
  }
  return off;
}

Mlp make_mlp(std::vector<int> widths, CounterRng& rng) {
  if (widths.size() < 2) {
    throw ValidationError("mlp: needs at least input and output widths");
  }
  Mlp net;
  net.widths = std::move(widths);
  net.theta.resize(net.n_params());
  std::size_t k = 0;
  for (std::size_t l = 1; l < net.widths.size(); ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(net.widths[l - 1]));
    for (int i = 0; i < net.widths[l] * net.widths[l - 1]; ++i) {
      net.theta[k++] = scale * rng.normal();
    }
    for (int i = 0; i < net.widths[l]; ++i) net.theta[k++] = 0.0;
  }
  return net;
}

void mlp_forward(const Mlp& net, std::span<const double> x, MlpWork& work) {
  const std::size_t layers = net.widths.size();
  if (x.size() != static_cast<std::size_t>(net.widths[0])) {
    throw ValidationError("mlp: input dimension mismatch");
  }
  work.h.resize(layers);
  work.pre.resize(layers);
  work.adj.resize(layers);
  work.h[0].assign(x.begin(), x.end());
  std::size_t off = 0;
  for (std::size_t l = 1; l < layers; ++l) {
    const int rows = net.widths[l];
    const int cols = net.widths[l - 1];
    const double* w = net.theta.data() + off;
    const double* b = w + static_cast<std::size_t>(rows) * cols;
    work.pre[l].assign(static_cast<std::size_t>(rows), 0.0);
    work.h[l].assign(static_cast<std::size_t>(rows), 0.0);
    const std::vector<double>& in = work.h[l - 1];
    const bool last = (l + 1 == layers);
    for (int i = 0; i < rows; ++i) {
      double acc = b[i];
      const double* wrow = w + static_cast<std::size_t>(i) * cols;
      for (int j = 0; j < cols; ++j) acc += wrow[j] * in[static_cast<std::size_t>(j)];
      work.pre[l][static_cast<std::size_t>(i)] = acc;
      work.h[l][static_cast<std::size_t>(i)] = last ? acc : std::tanh(acc);
    }
    off += static_cast<std::size_t>(rows) * cols + rows;
  }
}

void mlp_backward(const Mlp& net, MlpWork& work, std::span<const double> out_adj,
                  std::span<double> grad) {
  const std::size_t layers = net.widths.size();
  work.adj[layers - 1].assign(out_adj.begin(), out_adj.end());
  for (std::size_t l = layers - 1; l >= 1; --l) {
    const int rows = net.widths[l];
    const int cols = net.widths[l - 1];
    const std::size_t off = net.layer_offset(l);
    const double* w = net.theta.data() + off;
    double* gw = grad.data() + off;
    double* gb = gw + static_cast<std::size_t>(rows) * cols;
    const bool last = (l + 1 == layers);
    std::vector<double>& a = work.adj[l];
    // Fold activation derivative into the preactivation adjoint in place.
    if (!last) {
      for (int i = 0; i < rows; ++i) {
        const double t = work.h[l][static_cast<std::size_t>(i)];
        a[static_cast<std::size_t>(i)] *= 1.0 - t * t;
      }
    }
    work.adj[l - 1].assign(static_cast<std::size_t>(cols), 0.0);
    const std::vector<double>& in = work.h[l - 1];
    for (int i = 0; i < rows; ++i) {
      const double ai = a[static_cast<std::size_t>(i)];
      double* gwrow = gw + static_cast<std::size_t>(i) * cols;
      const double* wrow = w + static_cast<std::size_t>(i) * cols;
      for (int j = 0; j < cols; ++j) {
        gwrow[j] += ai * in[static_cast<std::size_t>(j)];
        work.adj[l - 1][static_cast<std::size_t>(j)] += ai * wrow[j];
      }
      gb[i] += ai;
    }
  }
}

}  // namespace probe
