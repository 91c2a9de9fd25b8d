#ifndef PITCHNET_OPTIM_HPP
#define PITCHNET_OPTIM_HPP

#include <cmath>
#include <string>
#include <vector>

#include "pitchnet/network.hpp"

namespace pitchnet {

struct RmsPropConfig {
  double learning_rate = 0.001;
  double decay = 0.9;
  double epsilon = 1e-7;

  bool operator==(const RmsPropConfig&) const = default;
};

inline void validate(const RmsPropConfig& c) {
  if (!(c.learning_rate > 0.0) || !(c.decay >= 0.0 && c.decay < 1.0) || !(c.epsilon > 0.0)) {
    fail(ErrorCode::InvalidArgument, "RMSProp needs learning_rate > 0, decay in [0,1), epsilon > 0");
  }
}

/// Hyperparameters plus the running mean of squared gradients, shaped like
/// the parameters.
struct RmsPropState {
  RmsPropConfig config;
  NetworkParams mean_square;

  static RmsPropState zeros(const NetworkSpec& spec, RmsPropConfig config = {}) {
    validate(config);
    return {config, zero_params(spec)};
  }
};

/// s <- decay*s + (1-decay)*g^2;  theta <- theta - lr*g / (sqrt(s) + eps)
inline void rmsprop_step(NetworkParams& params, const NetworkParams& grads, RmsPropState& state) {
  std::vector<Tensor*> p, s;
  std::vector<const Tensor*> g;
  params.for_each([&](const std::string&, Tensor& t) { p.push_back(&t); });
  state.mean_square.for_each([&](const std::string&, Tensor& t) { s.push_back(&t); });
  grads.for_each([&](const std::string& name, const Tensor& t) {
    if (!all_finite(t.data)) fail(ErrorCode::NonFiniteGradient, "non-finite gradient in " + name);
    g.push_back(&t);
  });
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i]->shape != g[i]->shape || p[i]->shape != s[i]->shape) {
      fail(ErrorCode::ShapeMismatch, "parameter, gradient and accumulator shapes disagree");
    }
  }

  const double rho = state.config.decay, lr = state.config.learning_rate, eps = state.config.epsilon;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double* theta = p[i]->data.data();
    double* acc = s[i]->data.data();
    const double* grad = g[i]->data.data();
    for (std::size_t k = 0, n = p[i]->size(); k < n; ++k) {
      acc[k] = rho * acc[k] + (1.0 - rho) * grad[k] * grad[k];
      theta[k] -= lr * grad[k] / (std::sqrt(acc[k]) + eps);
    }
  }
  ++params.revision;
}

}  // namespace pitchnet

#endif  // PITCHNET_OPTIM_HPP
