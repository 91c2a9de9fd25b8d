#ifndef PITCHNET_GRADIENT_CHECK_HPP
#define PITCHNET_GRADIENT_CHECK_HPP

// Finite-difference verification of network_backward.
//
// The numeric side does not reuse network_forward: it re-evaluates the loss
// with a separate straight-line implementation in extended precision. In
// double precision the central difference carries ~1e-11 absolute roundoff,
// which swamps the relative error of recurrent-weight gradients of order
// 1e-9 on tiny networks.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pitchnet/network.hpp"

namespace pitchnet {

struct GradientCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

namespace detail {

using Wide = long double;
using WideTensors = std::vector<std::vector<Wide>>;  // NetworkParams::for_each order

inline WideTensors widen(const NetworkParams& p) {
  WideTensors out;
  p.for_each([&](const std::string&, const Tensor& t) { out.emplace_back(t.data.begin(), t.data.end()); });
  return out;
}

// Cross-entropy of one window, dropout off, computed scalar by scalar.
inline Wide reference_loss(const WideTensors& w, const NetworkSpec& spec, std::span<const double> input, TokenId target) {
  const std::size_t H = spec.lstm_width, T = input.size();
  auto sig = [](Wide x) { return 1 / (1 + std::exp(-x)); };

  std::vector<std::vector<Wide>> seq(T, std::vector<Wide>(1));
  for (std::size_t t = 0; t < T; ++t) seq[t][0] = input[t];

  for (std::size_t l = 0; l < kLstmLayers; ++l) {
    const auto& W = w[3 * l];
    const auto& U = w[3 * l + 1];
    const auto& b = w[3 * l + 2];
    const std::size_t D = seq[0].size();
    std::vector<Wide> h(H, 0), c(H, 0), a(4 * H);
    std::vector<std::vector<Wide>> out;
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t r = 0; r < 4 * H; ++r) {
        Wide s = b[r];
        for (std::size_t k = 0; k < D; ++k) s += W[r * D + k] * seq[t][k];
        for (std::size_t k = 0; k < H; ++k) s += U[r * H + k] * h[k];
        a[r] = s;
      }
      for (std::size_t j = 0; j < H; ++j) {
        const Wide i = sig(a[j]), f = sig(a[H + j]), g = std::tanh(a[2 * H + j]), o = sig(a[3 * H + j]);
        c[j] = f * c[j] + i * g;
        h[j] = o * std::tanh(c[j]);
      }
      out.push_back(h);
    }
    seq = std::move(out);
  }

  const auto& last = seq.back();
  const auto &W1 = w[9], &b1 = w[10], &W2 = w[11], &b2 = w[12];
  const std::size_t K = spec.dense_width, V = spec.vocab_size;
  std::vector<Wide> d(K);
  for (std::size_t r = 0; r < K; ++r) {
    Wide s = b1[r];
    for (std::size_t k = 0; k < H; ++k) s += W1[r * H + k] * last[k];
    d[r] = spec.dense_relu && s < 0 ? 0 : s;
  }
  std::vector<Wide> z(V);
  Wide mx = -INFINITY;
  for (std::size_t r = 0; r < V; ++r) {
    Wide s = b2[r];
    for (std::size_t k = 0; k < K; ++k) s += W2[r * K + k] * d[k];
    z[r] = s;
    mx = std::max(mx, s);
  }
  Wide sum = 0;
  for (Wide v : z) sum += std::exp(v - mx);
  return -(z[target] - mx - std::log(sum));
}

}  // namespace detail

/// Compares backprop against central differences (L(θ+δ) − L(θ−δ)) / 2δ for
/// every parameter on one window. Dropout is disabled.
inline GradientCheckReport gradient_check(const NetworkParams& params, NetworkSpec spec, std::span<const double> input,
                                          TokenId target, double step = 1e-5, GradientFault fault = GradientFault::None) {
  spec.dropout = 0.0;
  Engine rng(0);
  const auto cache = network_forward(input, params, spec, Mode::Train, rng);
  const NetworkParams analytic = network_backward(cache, params, target, fault);

  std::vector<const Tensor*> grads;
  std::vector<std::string> names;
  analytic.for_each([&](const std::string& name, const Tensor& t) {
    grads.push_back(&t);
    names.push_back(name);
  });

  auto wide = detail::widen(params);
  GradientCheckReport report;
  for (std::size_t ti = 0; ti < wide.size(); ++ti) {
    for (std::size_t k = 0; k < wide[ti].size(); ++k) {
      const detail::Wide saved = wide[ti][k];
      wide[ti][k] = saved + step;
      const detail::Wide up = detail::reference_loss(wide, spec, input, target);
      wide[ti][k] = saved - step;
      const detail::Wide down = detail::reference_loss(wide, spec, input, target);
      wide[ti][k] = saved;
      const double numeric = static_cast<double>((up - down) / (2 * static_cast<detail::Wide>(step)));
      const double a = (*grads[ti])[k];
      const double err = relative_error(a, numeric);
      ++report.checked;
      if (err > report.max_rel_error || report.worst_param.empty()) {
        report.max_rel_error = err;
        report.worst_param = names[ti] + "[" + std::to_string(k) + "]";
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

/// Parameters, window and target all drawn from `seed`.
inline GradientCheckReport gradient_check(const NetworkSpec& spec, std::uint64_t seed,
                                          GradientFault fault = GradientFault::None) {
  Engine rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<double> input(spec.window_len);
  for (double& x : input) x = normalize_id(static_cast<TokenId>(uniform_index(rng, spec.vocab_size)), spec.vocab_size);
  const auto target = static_cast<TokenId>(uniform_index(rng, spec.vocab_size));
  return gradient_check(init_params(spec, seed), spec, input, target, 1e-5, fault);
}

}  // namespace pitchnet

#endif  // PITCHNET_GRADIENT_CHECK_HPP
