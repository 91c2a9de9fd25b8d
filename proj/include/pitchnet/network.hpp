#ifndef PITCHNET_NETWORK_HPP
#define PITCHNET_NETWORK_HPP

// Three stacked LSTM layers followed by two dense layers and a softmax:
//
//   LSTM -> dropout -> LSTM -> dropout -> LSTM(last state) -> dense -> dropout
//        -> dense(V) -> softmax
//
// Input is one scalar per timestep. Gate blocks in every LSTM weight matrix are
// stored in the order (input, forget, candidate, output).

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pitchnet/dataset.hpp"
#include "pitchnet/error.hpp"
#include "pitchnet/rng.hpp"
#include "pitchnet/tensor.hpp"

namespace pitchnet {

inline constexpr std::size_t kLstmLayers = 3;
inline constexpr double kLossClip = 1e-12;

enum class Mode { Train, Infer };

struct NetworkSpec {
  std::size_t lstm_width = 512;
  std::size_t dense_width = 256;
  std::size_t vocab_size = 0;
  double dropout = 0.3;
  std::size_t window_len = 80;
  // Linear by default; ReLU on the first dense layer is an opt-in variant.
  bool dense_relu = false;

  bool operator==(const NetworkSpec&) const = default;
};

inline void validate(const NetworkSpec& spec) {
  if (spec.lstm_width == 0 || spec.dense_width == 0 || spec.vocab_size == 0 || spec.window_len == 0) {
    fail(ErrorCode::InvalidArgument, "network widths, vocabulary size and window length must be positive");
  }
  if (!(spec.dropout >= 0.0 && spec.dropout < 1.0)) fail(ErrorCode::InvalidArgument, "dropout rate must lie in [0, 1)");
}

struct LstmLayerParams {
  Tensor W;  // [4H x D]
  Tensor U;  // [4H x H]
  Tensor b;  // [4H]

  std::size_t hidden() const { return U.cols(); }
  std::size_t input_dim() const { return W.cols(); }
  bool operator==(const LstmLayerParams&) const = default;
};

inline LstmLayerParams make_lstm_params(std::size_t input_dim, std::size_t hidden) {
  return {Tensor({4 * hidden, input_dim}), Tensor({4 * hidden, hidden}), Tensor({4 * hidden})};
}

struct NetworkParams {
  std::array<LstmLayerParams, kLstmLayers> lstm;
  Tensor dense1_W, dense1_b, dense2_W, dense2_b;
  // Bumped on every optimizer update; forward caches remember it.
  std::uint64_t revision = 0;

  template <typename Self, typename F>
  static void visit(Self& self, F&& fn) {
    for (std::size_t l = 0; l < kLstmLayers; ++l) {
      const std::string p = "lstm" + std::to_string(l) + ".";
      fn(p + "W", self.lstm[l].W);
      fn(p + "U", self.lstm[l].U);
      fn(p + "b", self.lstm[l].b);
    }
    fn(std::string("dense1.W"), self.dense1_W);
    fn(std::string("dense1.b"), self.dense1_b);
    fn(std::string("dense2.W"), self.dense2_W);
    fn(std::string("dense2.b"), self.dense2_b);
  }
  /// Calls fn(name, tensor) for every parameter tensor in a fixed order.
  template <typename F> void for_each(F&& fn) { visit(*this, fn); }
  template <typename F> void for_each(F&& fn) const { visit(*this, fn); }

  std::size_t count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const Tensor& t) { n += t.size(); });
    return n;
  }

  bool operator==(const NetworkParams& o) const {
    return lstm == o.lstm && dense1_W == o.dense1_W && dense1_b == o.dense1_b && dense2_W == o.dense2_W &&
           dense2_b == o.dense2_b;
  }
};

/// Zero tensors shaped for `spec`; also the layout for gradients and
/// optimizer accumulators.
inline NetworkParams zero_params(const NetworkSpec& spec) {
  validate(spec);
  const std::size_t H = spec.lstm_width;
  NetworkParams p;
  p.lstm[0] = make_lstm_params(1, H);
  for (std::size_t l = 1; l < kLstmLayers; ++l) p.lstm[l] = make_lstm_params(H, H);
  p.dense1_W = Tensor({spec.dense_width, H});
  p.dense1_b = Tensor({spec.dense_width});
  p.dense2_W = Tensor({spec.vocab_size, spec.dense_width});
  p.dense2_b = Tensor({spec.vocab_size});
  return p;
}

/// Glorot-uniform kernels, zero biases except the LSTM forget-gate slice (1.0).
inline NetworkParams init_params(const NetworkSpec& spec, std::uint64_t seed) {
  NetworkParams p = zero_params(spec);
  Engine rng(seed);
  auto glorot = [&](Tensor& t, std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : t.data) {
      double u;
      do u = uniform01(rng);
      while (u == 0.0);
      v = (2.0 * u - 1.0) * limit;
    }
  };
  const std::size_t H = spec.lstm_width;
  for (auto& layer : p.lstm) {
    glorot(layer.W, layer.input_dim(), 4 * H);
    glorot(layer.U, H, 4 * H);
    for (std::size_t j = H; j < 2 * H; ++j) layer.b[j] = 1.0;
  }
  glorot(p.dense1_W, H, spec.dense_width);
  glorot(p.dense2_W, spec.dense_width, spec.vocab_size);
  return p;
}

inline void check_shapes(const NetworkParams& p, const NetworkSpec& spec) {
  const NetworkParams expect = zero_params(spec);
  std::vector<Shape> shapes;
  expect.for_each([&](const std::string&, const Tensor& t) { shapes.push_back(t.shape); });
  std::size_t i = 0;
  p.for_each([&](const std::string& name, const Tensor& t) {
    if (t.shape != shapes[i] || t.size() != shape_size(shapes[i])) {
      fail(ErrorCode::ShapeMismatch, name + " has shape " + shape_string(t.shape) + ", expected " + shape_string(shapes[i]));
    }
    ++i;
  });
}

// ---------------------------------------------------------------------------
// Elementwise helpers

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---------------------------------------------------------------------------
// LSTM cell

struct LayerState {
  std::vector<double> h;
  std::vector<double> c;

  static LayerState zeros(std::size_t hidden) { return {std::vector<double>(hidden), std::vector<double>(hidden)}; }
};

namespace detail {

// One timestep. `gates` receives the activated (i, f, g, o) blocks.
inline void lstm_step(const LstmLayerParams& p, std::span<const double> x, std::span<const double> h_prev,
                      std::span<const double> c_prev, std::span<double> gates, std::span<double> c,
                      std::span<double> tanh_c, std::span<double> h) {
  const std::size_t H = p.hidden();
  std::copy(p.b.data.begin(), p.b.data.end(), gates.begin());
  matvec_acc(p.W, x, gates);
  matvec_acc(p.U, h_prev, gates);
  for (std::size_t j = 0; j < H; ++j) {
    const double i = sigmoid(gates[j]);
    const double f = sigmoid(gates[H + j]);
    const double g = std::tanh(gates[2 * H + j]);
    const double o = sigmoid(gates[3 * H + j]);
    gates[j] = i;
    gates[H + j] = f;
    gates[2 * H + j] = g;
    gates[3 * H + j] = o;
    c[j] = f * c_prev[j] + i * g;
    tanh_c[j] = std::tanh(c[j]);
    h[j] = o * tanh_c[j];
  }
}

}  // namespace detail

/// What one timestep keeps for the backward pass.
struct LstmStepCache {
  std::vector<double> x, h_prev, c_prev;
  std::vector<double> gates;  // activated i, f, g, o
  std::vector<double> c, tanh_c;
};

inline std::pair<LayerState, LstmStepCache> lstm_cell_forward(std::span<const double> x, const LayerState& state,
                                                               const LstmLayerParams& p) {
  const std::size_t H = p.hidden();
  if (x.size() != p.input_dim() || state.h.size() != H || state.c.size() != H || p.W.rows() != 4 * H ||
      p.b.size() != 4 * H) {
    fail(ErrorCode::ShapeMismatch, "LSTM cell input/state/parameter shapes disagree");
  }
  LstmStepCache cache{{x.begin(), x.end()}, state.h, state.c, std::vector<double>(4 * H), std::vector<double>(H),
                      std::vector<double>(H)};
  LayerState next = LayerState::zeros(H);
  detail::lstm_step(p, x, state.h, state.c, cache.gates, cache.c, cache.tanh_c, next.h);
  next.c = cache.c;
  return {std::move(next), std::move(cache)};
}

// ---------------------------------------------------------------------------
// Dense, dropout, softmax, loss

inline std::vector<double> dense_forward(std::span<const double> x, const Tensor& W, const Tensor& b) {
  if (W.shape.size() != 2 || W.cols() != x.size() || b.size() != W.rows()) {
    fail(ErrorCode::ShapeMismatch, "dense layer shapes disagree");
  }
  std::vector<double> y(b.data);
  matvec_acc(W, x, y);
  return y;
}

/// Inverted dropout. The returned mask holds the per-entry multiplier
/// (0 or 1/(1-rate)); it is all ones in inference mode.
inline std::pair<std::vector<double>, std::vector<double>> dropout_apply(std::span<const double> x, double rate, Mode mode,
                                                                         Engine& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) fail(ErrorCode::InvalidArgument, "dropout rate must lie in [0, 1)");
  std::vector<double> mask(x.size(), 1.0);
  if (mode == Mode::Train && rate > 0.0) {
    const double keep_scale = 1.0 / (1.0 - rate);
    for (double& m : mask) m = uniform01(rng) < rate ? 0.0 : keep_scale;
  }
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] * mask[k];
  return {std::move(out), std::move(mask)};
}

struct PredictionDistribution {
  std::vector<double> probs;
};

inline PredictionDistribution softmax(std::span<const double> z) {
  if (z.empty()) fail(ErrorCode::ShapeMismatch, "softmax of an empty vector");
  if (!all_finite(z)) fail(ErrorCode::NonFiniteInput, "softmax input contains a non-finite value");
  double mx = z[0];
  for (double v : z) mx = std::max(mx, v);
  PredictionDistribution d{std::vector<double>(z.size())};
  double sum = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) sum += (d.probs[k] = std::exp(z[k] - mx));
  for (double& p : d.probs) p /= sum;
  return d;
}

inline double cross_entropy(const PredictionDistribution& pred, TokenId target) {
  if (target >= pred.probs.size()) fail(ErrorCode::IdOutOfRange, "target id outside distribution");
  const double p = pred.probs[target];
  return -std::log(p < kLossClip ? kLossClip : p);
}

// ---------------------------------------------------------------------------
// Full network

/// Activations of one LSTM layer over a window, flat [time x width].
struct LstmLayerCache {
  std::size_t steps = 0, input_dim = 0, hidden = 0;
  std::vector<double> x;       // [T x D]
  std::vector<double> h, c;    // [(T+1) x H], row 0 is the zero initial state
  std::vector<double> gates;   // [T x 4H]
  std::vector<double> tanh_c;  // [T x H]

  void resize(std::size_t T, std::size_t D, std::size_t H) {
    steps = T, input_dim = D, hidden = H;
    x.assign(T * D, 0.0);
    h.assign((T + 1) * H, 0.0);
    c.assign((T + 1) * H, 0.0);
    gates.assign(T * 4 * H, 0.0);
    tanh_c.assign(T * H, 0.0);
  }
  std::span<const double> h_at(std::size_t t) const { return {h.data() + (t + 1) * hidden, hidden}; }
};

struct ForwardCache {
  const NetworkParams* params = nullptr;
  std::uint64_t revision = 0;
  Mode mode = Mode::Infer;
  bool dense_relu = false;
  std::array<LstmLayerCache, kLstmLayers> lstm;
  std::array<std::vector<double>, 2> seq_mask;  // after LSTM 1 and 2, [T x H]
  std::vector<double> z1, a1, dense_mask, d1;   // dense1 pre-act, post-act, mask, dropped
  std::vector<double> logits;
  PredictionDistribution dist;
};

namespace detail {

inline void lstm_layer_forward(const LstmLayerParams& p, LstmLayerCache& lc) {
  const std::size_t H = lc.hidden, D = lc.input_dim;
  for (std::size_t t = 0; t < lc.steps; ++t) {
    lstm_step(p, {lc.x.data() + t * D, D}, {lc.h.data() + t * H, H}, {lc.c.data() + t * H, H},
              {lc.gates.data() + t * 4 * H, 4 * H}, {lc.c.data() + (t + 1) * H, H}, {lc.tanh_c.data() + t * H, H},
              {lc.h.data() + (t + 1) * H, H});
  }
}

inline void fill_mask(std::vector<double>& mask, std::size_t n, double rate, Mode mode, Engine& rng) {
  mask.assign(n, 1.0);
  if (mode != Mode::Train || rate == 0.0) return;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask) m = uniform01(rng) < rate ? 0.0 : keep_scale;
}

}  // namespace detail

/// Runs one window through the network, reusing `cache` storage.
inline void network_forward(std::span<const double> input, const NetworkParams& params, const NetworkSpec& spec, Mode mode,
                            Engine& rng, ForwardCache& cache) {
  const std::size_t T = input.size(), H = spec.lstm_width;
  if (T == 0 || params.lstm[0].W.cols() != 1 || params.lstm[0].hidden() != H || params.dense2_b.size() != spec.vocab_size ||
      params.dense1_b.size() != spec.dense_width) {
    fail(ErrorCode::ShapeMismatch, "network input or parameters do not match the network spec");
  }
  cache.params = &params;
  cache.revision = params.revision;
  cache.mode = mode;
  cache.dense_relu = spec.dense_relu;

  for (std::size_t l = 0; l < kLstmLayers; ++l) {
    auto& lc = cache.lstm[l];
    lc.resize(T, l == 0 ? 1 : H, H);
    if (l == 0) {
      std::copy(input.begin(), input.end(), lc.x.begin());
    } else {
      // Input to this layer is the previous layer's hidden sequence after dropout.
      auto& mask = cache.seq_mask[l - 1];
      detail::fill_mask(mask, T * H, spec.dropout, mode, rng);
      const auto& prev = cache.lstm[l - 1].h;
      for (std::size_t k = 0; k < T * H; ++k) lc.x[k] = prev[H + k] * mask[k];
    }
    detail::lstm_layer_forward(params.lstm[l], lc);
  }

  const auto last = cache.lstm[kLstmLayers - 1].h_at(T - 1);
  cache.z1 = dense_forward(last, params.dense1_W, params.dense1_b);
  cache.a1 = cache.z1;
  if (spec.dense_relu)
    for (double& v : cache.a1) v = v > 0.0 ? v : 0.0;
  detail::fill_mask(cache.dense_mask, cache.a1.size(), spec.dropout, mode, rng);
  cache.d1.resize(cache.a1.size());
  for (std::size_t k = 0; k < cache.a1.size(); ++k) cache.d1[k] = cache.a1[k] * cache.dense_mask[k];
  cache.logits = dense_forward(cache.d1, params.dense2_W, params.dense2_b);
  cache.dist = softmax(cache.logits);
}

inline ForwardCache network_forward(std::span<const double> input, const NetworkParams& params, const NetworkSpec& spec,
                                    Mode mode, Engine& rng) {
  ForwardCache cache;
  network_forward(input, params, spec, mode, rng, cache);
  return cache;
}

/// Deliberate defects for verifying that the gradient check catches bugs.
enum class GradientFault { None, ZeroForgetGate };

namespace detail {

// Backpropagates one LSTM layer through all timesteps. `dh_ext` is the loss
// gradient arriving at each hidden output [T x H]; gradients w.r.t. the
// layer inputs are written to `dx` when it is non-empty.
inline void lstm_layer_backward(const LstmLayerParams& p, const LstmLayerCache& lc, std::span<const double> dh_ext,
                                LstmLayerParams& grad, std::span<double> dx, GradientFault fault) {
  const std::size_t T = lc.steps, H = lc.hidden, D = lc.input_dim;
  std::vector<double> dh_next(H, 0.0), dc_next(H, 0.0), da(4 * H);
  for (std::size_t t = T; t-- > 0;) {
    const double* gates = lc.gates.data() + t * 4 * H;
    const double* tanh_c = lc.tanh_c.data() + t * H;
    const double* c_prev = lc.c.data() + t * H;
    for (std::size_t j = 0; j < H; ++j) {
      const double i = gates[j], f = gates[H + j], g = gates[2 * H + j], o = gates[3 * H + j];
      const double dh = dh_ext[t * H + j] + dh_next[j];
      const double dc = dc_next[j] + dh * o * (1.0 - tanh_c[j] * tanh_c[j]);
      da[j] = dc * g * i * (1.0 - i);
      da[H + j] = fault == GradientFault::ZeroForgetGate ? 0.0 : dc * c_prev[j] * f * (1.0 - f);
      da[2 * H + j] = dc * i * (1.0 - g * g);
      da[3 * H + j] = dh * tanh_c[j] * o * (1.0 - o);
      dc_next[j] = dc * f;
    }
    std::span<const double> x{lc.x.data() + t * D, D};
    std::span<const double> h_prev{lc.h.data() + t * H, H};
    outer_acc(grad.W, da, x);
    outer_acc(grad.U, da, h_prev);
    for (std::size_t k = 0; k < 4 * H; ++k) grad.b[k] += da[k];
    if (!dx.empty()) matvec_t_acc(p.W, da, dx.subspan(t * D, D));
    std::fill(dh_next.begin(), dh_next.end(), 0.0);
    matvec_t_acc(p.U, da, dh_next);
  }
}

}  // namespace detail

/// Adds d(cross-entropy)/d(params) for the cached window into `grad`.
inline void network_backward(const ForwardCache& cache, const NetworkParams& params, TokenId target, NetworkParams& grad,
                             GradientFault fault = GradientFault::None) {
  if (cache.params != &params || cache.revision != params.revision || cache.dist.probs.empty()) {
    fail(ErrorCode::StaleCache, "forward cache does not belong to the current parameters");
  }
  const std::size_t V = cache.dist.probs.size();
  if (target >= V) fail(ErrorCode::IdOutOfRange, "target id outside vocabulary");
  const std::size_t T = cache.lstm[0].steps, H = cache.lstm[0].hidden;

  std::vector<double> dlogits = cache.dist.probs;
  dlogits[target] -= 1.0;
  outer_acc(grad.dense2_W, dlogits, cache.d1);
  for (std::size_t k = 0; k < V; ++k) grad.dense2_b[k] += dlogits[k];

  std::vector<double> dz1(cache.d1.size(), 0.0);
  matvec_t_acc(params.dense2_W, dlogits, dz1);
  for (std::size_t k = 0; k < dz1.size(); ++k) {
    dz1[k] *= cache.dense_mask[k];
    if (cache.dense_relu && cache.z1[k] <= 0.0) dz1[k] = 0.0;
  }
  outer_acc(grad.dense1_W, dz1, cache.lstm[kLstmLayers - 1].h_at(T - 1));
  for (std::size_t k = 0; k < dz1.size(); ++k) grad.dense1_b[k] += dz1[k];

  // Only the final hidden state of the top LSTM feeds the dense stack.
  std::vector<double> dh(T * H, 0.0), dx(T * H, 0.0);
  matvec_t_acc(params.dense1_W, dz1, std::span<double>(dh).subspan((T - 1) * H, H));

  for (std::size_t l = kLstmLayers; l-- > 0;) {
    const bool need_dx = l > 0;
    if (need_dx) std::fill(dx.begin(), dx.end(), 0.0);
    detail::lstm_layer_backward(params.lstm[l], cache.lstm[l], dh, grad.lstm[l], need_dx ? std::span<double>(dx) : std::span<double>(),
                                fault);
    if (need_dx) {
      const auto& mask = cache.seq_mask[l - 1];
      for (std::size_t k = 0; k < T * H; ++k) dh[k] = dx[k] * mask[k];
    }
  }
}

inline NetworkParams network_backward(const ForwardCache& cache, const NetworkParams& params, TokenId target,
                                      GradientFault fault = GradientFault::None) {
  NetworkParams grad = params;
  grad.for_each([](const std::string&, Tensor& t) { t.fill(0.0); });
  network_backward(cache, params, target, grad, fault);
  return grad;
}

/// Convenience: loss of one window in inference mode.
inline double window_loss(std::span<const double> input, TokenId target, const NetworkParams& params, const NetworkSpec& spec) {
  Engine unused(0);
  return cross_entropy(network_forward(input, params, spec, Mode::Infer, unused).dist, target);
}

}  // namespace pitchnet

#endif  // PITCHNET_NETWORK_HPP
