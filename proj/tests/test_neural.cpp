#include <cmath>
#include <random>

#include "pitchnet/gradient_check.hpp"
#include "pitchnet/network.hpp"
#include "support.hpp"

using namespace pitchnet;

namespace {

NetworkSpec tiny_spec(std::size_t H = 4, std::size_t dense = 4, std::size_t V = 5, std::size_t window = 3) {
  NetworkSpec s;
  s.lstm_width = H;
  s.dense_width = dense;
  s.vocab_size = V;
  s.window_len = window;
  s.dropout = 0.0;
  return s;
}

std::vector<double> random_input(std::mt19937_64& rng, std::size_t T, std::size_t V) {
  std::vector<double> x(T);
  for (double& v : x) v = static_cast<double>(rng() % V) / static_cast<double>(V);
  return x;
}

double scalar_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Straight-line evaluation of the five cell formulas, one unit at a time.
void scalar_cell(const LstmLayerParams& p, const std::vector<double>& x, const std::vector<double>& h,
                 const std::vector<double>& c, std::vector<double>& h_out, std::vector<double>& c_out) {
  const std::size_t H = h.size(), D = x.size();
  auto pre = [&](std::size_t gate, std::size_t j) {
    const std::size_t r = gate * H + j;
    double s = p.b.data[r];
    for (std::size_t d = 0; d < D; ++d) s += p.W.data[r * D + d] * x[d];
    for (std::size_t k = 0; k < H; ++k) s += p.U.data[r * H + k] * h[k];
    return s;
  };
  h_out.assign(H, 0.0);
  c_out.assign(H, 0.0);
  for (std::size_t j = 0; j < H; ++j) {
    const double i = scalar_sigmoid(pre(0, j));
    const double f = scalar_sigmoid(pre(1, j));
    const double g = std::tanh(pre(2, j));
    const double o = scalar_sigmoid(pre(3, j));
    c_out[j] = f * c[j] + i * g;
    h_out[j] = o * std::tanh(c_out[j]);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Initialization

TEST(Init, DeterministicPerSeed) {
  const auto spec = tiny_spec(6, 5, 7, 4);
  EXPECT_EQ(init_params(spec, 42), init_params(spec, 42));
  EXPECT_FALSE(init_params(spec, 42) == init_params(spec, 43));
}

TEST(Init, ForgetBiasOnesOtherBiasesZero) {
  const auto spec = tiny_spec(6, 5, 7, 4);
  const auto p = init_params(spec, 1);
  for (const auto& layer : p.lstm) {
    for (std::size_t k = 0; k < 4 * 6; ++k) EXPECT_EQ(layer.b[k], (k >= 6 && k < 12) ? 1.0 : 0.0) << k;
  }
  for (double v : p.dense1_b.data) EXPECT_EQ(v, 0.0);
  for (double v : p.dense2_b.data) EXPECT_EQ(v, 0.0);
}

TEST(Init, KernelsWithinGlorotBound) {
  const auto spec = tiny_spec(16, 12, 9, 4);
  const auto p = init_params(spec, 8);
  auto check = [](const Tensor& t, double fan_in, double fan_out) {
    const double L = std::sqrt(6.0 / (fan_in + fan_out));
    double max_abs = 0.0;
    for (double v : t.data) {
      ASSERT_LT(std::abs(v), L);
      ASSERT_NE(v, 0.0);
      max_abs = std::max(max_abs, std::abs(v));
    }
    EXPECT_GT(max_abs, 0.8 * L);  // values actually span the interval
  };
  check(p.lstm[0].W, 1, 64);
  check(p.lstm[0].U, 16, 64);
  check(p.lstm[1].W, 16, 64);
  check(p.lstm[2].U, 16, 64);
  check(p.dense1_W, 16, 12);
  check(p.dense2_W, 12, 9);
}

TEST(Init, ShapesFollowTheSpec) {
  const auto spec = tiny_spec(5, 3, 7, 4);
  const auto p = init_params(spec, 0);
  EXPECT_EQ(p.lstm[0].W.shape, (Shape{20, 1}));
  EXPECT_EQ(p.lstm[1].W.shape, (Shape{20, 5}));
  EXPECT_EQ(p.lstm[2].U.shape, (Shape{20, 5}));
  EXPECT_EQ(p.dense1_W.shape, (Shape{3, 5}));
  EXPECT_EQ(p.dense2_W.shape, (Shape{7, 3}));
  EXPECT_EQ(p.count(), 20u * (1 + 5 + 1) + 2 * 20u * (5 + 5 + 1) + 3 * 5 + 3 + 7 * 3 + 7);
  EXPECT_NO_THROW(check_shapes(p, spec));
  auto spec2 = spec;
  spec2.vocab_size = 8;
  EXPECT_CODE(check_shapes(p, spec2), ErrorCode::ShapeMismatch);
}

TEST(Init, InvalidSpecRejected) {
  auto s = tiny_spec();
  s.dropout = 1.0;
  EXPECT_CODE(init_params(s, 0), ErrorCode::InvalidArgument);
  s = tiny_spec();
  s.lstm_width = 0;
  EXPECT_CODE(init_params(s, 0), ErrorCode::InvalidArgument);
}

// ---------------------------------------------------------------------------
// LSTM cell

TEST(Cell, ZeroParamsZeroState) {
  const auto p = make_lstm_params(1, 1);
  const std::vector<double> x{0.7};
  const auto [next, cache] = lstm_cell_forward(x, LayerState::zeros(1), p);
  EXPECT_EQ(cache.gates, (std::vector<double>{0.5, 0.5, 0.0, 0.5}));
  EXPECT_EQ(next.c[0], 0.0);
  EXPECT_EQ(next.h[0], 0.0);
}

TEST(Cell, ZeroParamsCarryHalfTheCell) {
  const auto p = make_lstm_params(1, 1);
  const std::vector<double> x{0.0};
  const auto [next, cache] = lstm_cell_forward(x, LayerState{{0.0}, {1.0}}, p);
  EXPECT_DOUBLE_EQ(next.c[0], 0.5);
  EXPECT_NEAR(next.h[0], 0.5 * std::tanh(0.5), 1e-15);
  EXPECT_NEAR(next.h[0], 0.23105, 1e-5);
}

TEST(Cell, HandcraftedMatchesScalarOracle) {
  LstmLayerParams p = make_lstm_params(1, 2);
  p.W.data = {0.3, -0.2, 0.5, 0.1, -0.4, 0.25, 0.6, -0.7};
  p.U.data = {0.1, 0.2, -0.3, 0.4, 0.05, -0.15, 0.35, 0.45, -0.5, 0.55, 0.2, -0.25, 0.3, 0.12, -0.08, 0.6};
  p.b.data = {0.01, -0.02, 1.0, 1.0, 0.03, -0.04, 0.05, 0.06};
  LayerState s{{0.2, -0.1}, {0.5, -0.3}};
  for (double xv : {0.25, 0.75, 0.1}) {
    std::vector<double> h_ref, c_ref;
    scalar_cell(p, {xv}, s.h, s.c, h_ref, c_ref);
    const auto [next, cache] = lstm_cell_forward(std::vector<double>{xv}, s, p);
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_NEAR(next.h[j], h_ref[j], 1e-15);
      EXPECT_NEAR(next.c[j], c_ref[j], 1e-15);
    }
    s = next;
  }
}

TEST(Cell, ShapeMismatch) {
  const auto p = make_lstm_params(2, 3);
  EXPECT_CODE(lstm_cell_forward(std::vector<double>{1.0}, LayerState::zeros(3), p), ErrorCode::ShapeMismatch);
  EXPECT_CODE(lstm_cell_forward(std::vector<double>{1.0, 2.0}, LayerState::zeros(2), p), ErrorCode::ShapeMismatch);
}

TEST(Cell, SaturatedGatesPassTheCellUnchanged) {
  // f = 1 and a zero candidate make c' = c exactly at every step, whatever
  // the inputs and the recurrent weights do.
  const std::size_t H = 3;
  LstmLayerParams p = make_lstm_params(1, H);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t r = 0; r < 4 * H; ++r) {
    if (r >= 2 * H && r < 3 * H) continue;  // candidate block stays zero
    p.W.data[r] = u(rng);
    for (std::size_t k = 0; k < H; ++k) p.U.data[r * H + k] = 0.1 * u(rng);
  }
  for (std::size_t j = 0; j < H; ++j) {
    p.b[j] = -50.0;     // input gate closed
    p.b[H + j] = 50.0;  // forget gate open
  }
  LayerState s{{0.0, 0.0, 0.0}, {0.9, -0.4, 0.25}};
  const auto c0 = s.c;
  for (int t = 0; t < 200; ++t) {
    s = lstm_cell_forward(std::vector<double>{u(rng)}, s, p).first;
    ASSERT_EQ(s.c, c0) << "step " << t;
  }
}

// ---------------------------------------------------------------------------
// Dense, dropout, softmax, cross-entropy

TEST(Dense, IdentityAndBias) {
  const Tensor I({2, 2}, {1, 0, 0, 1});
  const std::vector<double> x{3.5, -2.0};
  EXPECT_EQ(dense_forward(x, I, Tensor({2})), x);
  EXPECT_EQ(dense_forward(x, Tensor({2, 2}), Tensor({2}, {1, 2})), (std::vector<double>{1, 2}));
}

TEST(Dense, RandomMatchesDotProducts) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int n = 0; n < 50; ++n) {
    Tensor W({2, 2}), b({2});
    for (double& v : W.data) v = u(rng);
    for (double& v : b.data) v = u(rng);
    const std::vector<double> x{u(rng), u(rng)};
    const auto y = dense_forward(x, W, b);
    EXPECT_NEAR(y[0], b[0] + W.at(0, 0) * x[0] + W.at(0, 1) * x[1], 1e-15);
    EXPECT_NEAR(y[1], b[1] + W.at(1, 0) * x[0] + W.at(1, 1) * x[1], 1e-15);
  }
}

TEST(Dense, ShapeMismatch) {
  EXPECT_CODE(dense_forward(std::vector<double>{1, 2, 3}, Tensor({2, 2}), Tensor({2})), ErrorCode::ShapeMismatch);
  EXPECT_CODE(dense_forward(std::vector<double>{1, 2}, Tensor({2, 2}), Tensor({3})), ErrorCode::ShapeMismatch);
}

TEST(Dropout, RateZeroIsIdentity) {
  Engine rng(1);
  const std::vector<double> x{1.0, -2.0, 3.0};
  EXPECT_EQ(dropout_apply(x, 0.0, Mode::Train, rng).first, x);
  EXPECT_EQ(dropout_apply(x, 0.0, Mode::Infer, rng).first, x);
}

TEST(Dropout, InferenceIsMaskFree) {
  Engine rng(1);
  const std::vector<double> x{1.0, -2.0, 3.0};
  const auto [out, mask] = dropout_apply(x, 0.3, Mode::Infer, rng);
  EXPECT_EQ(out, x);
  EXPECT_EQ(mask, (std::vector<double>{1, 1, 1}));
}

TEST(Dropout, TrainMeanWithinThreeSigma) {
  const double rate = 0.3;
  const std::size_t N = 100000;
  Engine rng(12345);
  const std::vector<double> ones(N, 1.0);
  const auto [out, mask] = dropout_apply(ones, rate, Mode::Train, rng);
  double sum = 0.0;
  std::size_t zeros = 0;
  for (std::size_t k = 0; k < N; ++k) {
    ASSERT_TRUE(out[k] == 0.0 || out[k] == 1.0 / (1.0 - rate));
    ASSERT_EQ(out[k], mask[k]);
    sum += out[k];
    zeros += out[k] == 0.0;
  }
  const double sigma = std::sqrt(rate / ((1.0 - rate) * static_cast<double>(N)));
  EXPECT_NEAR(sum / static_cast<double>(N), 1.0, 3.0 * sigma);
  EXPECT_GT(zeros, 0u);
}

TEST(Dropout, DeterministicGivenRngState) {
  Engine a(99), b(99);
  const std::vector<double> x(64, 2.0);
  EXPECT_EQ(dropout_apply(x, 0.5, Mode::Train, a), dropout_apply(x, 0.5, Mode::Train, b));
  EXPECT_CODE(dropout_apply(x, 1.0, Mode::Train, a), ErrorCode::InvalidArgument);
  EXPECT_CODE(dropout_apply(x, -0.1, Mode::Infer, a), ErrorCode::InvalidArgument);
}

TEST(Softmax, Uniform) {
  const auto d = softmax(std::vector<double>{0, 0, 0, 0});
  for (double p : d.probs) EXPECT_EQ(p, 0.25);
}

TEST(Softmax, ShiftInvariant) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  for (int n = 0; n < 500; ++n) {
    std::vector<double> z(1 + rng() % 12);
    for (double& v : z) v = u(rng);
    const double c = u(rng) * 10.0;
    std::vector<double> shifted(z);
    for (double& v : shifted) v += c;
    const auto a = softmax(z), b = softmax(shifted);
    double sum = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
      ASSERT_GE(a.probs[k], 0.0);
      ASSERT_NEAR(a.probs[k], b.probs[k], 1e-12);
      sum += a.probs[k];
    }
    ASSERT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(Softmax, MatchesExtendedPrecision) {
  const std::vector<double> z{1, 2, 3};
  const auto d = softmax(z);
  long double total = 0;
  for (double v : z) total += std::exp(static_cast<long double>(v));
  double sum = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_NEAR(d.probs[k], static_cast<double>(std::exp(static_cast<long double>(z[k])) / total), 1e-15);
    sum += d.probs[k];
  }
  EXPECT_NEAR(sum, 1.0, 1e-15);
  // Reference values to 12 digits.
  EXPECT_NEAR(d.probs[0], 0.0900305731704, 1e-12);
  EXPECT_NEAR(d.probs[1], 0.244728471054, 1e-12);
  EXPECT_NEAR(d.probs[2], 0.665240955775, 1e-12);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  const auto d = softmax(std::vector<double>{1000.0, 1000.0, -1000.0});
  EXPECT_EQ(d.probs[0], 0.5);
  EXPECT_EQ(d.probs[1], 0.5);
  EXPECT_EQ(d.probs[2], 0.0);
}

TEST(Softmax, NonFiniteInput) {
  EXPECT_CODE(softmax(std::vector<double>{0.0, std::nan("")}), ErrorCode::NonFiniteInput);
  EXPECT_CODE(softmax(std::vector<double>{0.0, INFINITY}), ErrorCode::NonFiniteInput);
}

TEST(CrossEntropy, Examples) {
  EXPECT_EQ(cross_entropy({{0.0, 1.0}}, 1), 0.0);
  for (std::size_t V : {2u, 5u, 14u, 300u}) {
    EXPECT_NEAR(cross_entropy({std::vector<double>(V, 1.0 / static_cast<double>(V))}, 0), std::log(static_cast<double>(V)), 1e-12);
  }
  EXPECT_NEAR(cross_entropy({{0.25, 0.75}}, 0), 1.386294, 1e-6);
  EXPECT_NEAR(cross_entropy({{0.0, 1.0}}, 0), -std::log(1e-12), 1e-9);
  EXPECT_CODE(cross_entropy({{0.5, 0.5}}, 2), ErrorCode::IdOutOfRange);
}

// ---------------------------------------------------------------------------
// Full forward pass

TEST(Forward, ZeroParamsGiveUniform) {
  const auto spec = tiny_spec(4, 4, 5, 3);
  const auto p = zero_params(spec);
  Engine rng(0);
  const auto cache = network_forward(std::vector<double>{0.2, 0.4, 0.6}, p, spec, Mode::Infer, rng);
  for (double q : cache.dist.probs) EXPECT_EQ(q, 0.2);
}

TEST(Forward, MatchesCompositionOfLayerOps) {
  const auto spec = tiny_spec(4, 4, 5, 3);
  std::mt19937_64 gen(31);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto p = init_params(spec, seed);
    for (double& v : p.dense1_b.data) v = 0.1 * static_cast<double>(gen() % 7);
    const auto x = random_input(gen, 3, 5);
    // Layers 1 and 2 return sequences, layer 3 only its last state.
    std::vector<std::vector<double>> seq;
    for (double v : x) seq.push_back({v});
    for (std::size_t l = 0; l < 3; ++l) {
      LayerState s = LayerState::zeros(4);
      std::vector<std::vector<double>> out;
      for (const auto& xt : seq) {
        s = lstm_cell_forward(xt, s, p.lstm[l]).first;
        out.push_back(s.h);
      }
      seq = out;
    }
    const auto z1 = dense_forward(seq.back(), p.dense1_W, p.dense1_b);
    const auto logits = dense_forward(z1, p.dense2_W, p.dense2_b);
    const auto expected = softmax(logits);
    Engine rng(0);
    const auto cache = network_forward(x, p, spec, Mode::Infer, rng);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(cache.dist.probs[k], expected.probs[k], 1e-14);
  }
}

TEST(Forward, ReluVariantClampsDenseLayer) {
  auto spec = tiny_spec(3, 4, 4, 2);
  spec.dense_relu = true;
  auto p = init_params(spec, 2);
  p.dense1_b.data = {-5.0, 5.0, -5.0, 5.0};
  Engine rng(0);
  const auto cache = network_forward(std::vector<double>{0.5, 0.25}, p, spec, Mode::Infer, rng);
  EXPECT_EQ(cache.a1[0], 0.0);
  EXPECT_EQ(cache.a1[2], 0.0);
  EXPECT_GT(cache.a1[1], 0.0);
  EXPECT_EQ(cache.z1[1], cache.a1[1]);
}

TEST(Forward, ProbabilitiesSumToOneAndAreDeterministic) {
  std::mt19937_64 gen(8);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto spec = tiny_spec(3 + seed % 5, 2 + seed % 4, 4 + seed % 6, 2 + seed % 7);
    spec.dropout = 0.3;
    const auto p = init_params(spec, seed);
    const auto x = random_input(gen, spec.window_len, spec.vocab_size);
    Engine a(seed), b(seed);
    const auto ca = network_forward(x, p, spec, Mode::Train, a);
    const auto cb = network_forward(x, p, spec, Mode::Train, b);
    ASSERT_EQ(ca.dist.probs, cb.dist.probs);
    double sum = 0.0;
    for (double q : ca.dist.probs) sum += q;
    ASSERT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(Forward, InferenceIgnoresDropoutAndRng) {
  auto spec = tiny_spec(5, 4, 6, 4);
  spec.dropout = 0.3;
  const auto p = init_params(spec, 3);
  const std::vector<double> x{0.1, 0.5, 0.0, 0.8};
  Engine a(1), b(2);
  EXPECT_EQ(network_forward(x, p, spec, Mode::Infer, a).dist.probs, network_forward(x, p, spec, Mode::Infer, b).dist.probs);
  auto spec0 = spec;
  spec0.dropout = 0.0;
  Engine c(1);
  EXPECT_EQ(network_forward(x, p, spec, Mode::Infer, a).dist.probs, network_forward(x, p, spec0, Mode::Train, c).dist.probs);
  Engine d(1);
  EXPECT_NE(network_forward(x, p, spec, Mode::Train, d).dist.probs, network_forward(x, p, spec, Mode::Infer, a).dist.probs);
}

TEST(Forward, SpecMismatch) {
  const auto spec = tiny_spec(4, 4, 5, 3);
  const auto p = init_params(spec, 0);
  auto other = spec;
  other.vocab_size = 6;
  Engine rng(0);
  EXPECT_CODE(network_forward(std::vector<double>{0.1, 0.2, 0.3}, p, other, Mode::Infer, rng), ErrorCode::ShapeMismatch);
  EXPECT_CODE(network_forward(std::vector<double>{}, p, spec, Mode::Infer, rng), ErrorCode::ShapeMismatch);
}

// ---------------------------------------------------------------------------
// Backward pass

TEST(Backward, LogitGradientIsProbsMinusOneHot) {
  const auto spec = tiny_spec(4, 4, 5, 3);
  const auto p = init_params(spec, 5);
  Engine rng(0);
  const auto cache = network_forward(std::vector<double>{0.2, 0.4, 0.6}, p, spec, Mode::Train, rng);
  const auto g = network_backward(cache, p, 2);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(g.dense2_b[k], cache.dist.probs[k] - (k == 2 ? 1.0 : 0.0));
}

TEST(Backward, CertainPredictionHasZeroGradient) {
  const auto spec = tiny_spec(4, 4, 5, 3);
  auto p = init_params(spec, 5);
  p.dense2_b.data = {0.0, 0.0, 2000.0, 0.0, 0.0};
  Engine rng(0);
  const auto cache = network_forward(std::vector<double>{0.2, 0.4, 0.6}, p, spec, Mode::Train, rng);
  ASSERT_EQ(cache.dist.probs[2], 1.0);
  const auto g = network_backward(cache, p, 2);
  g.for_each([](const std::string& name, const Tensor& t) {
    for (double v : t.data) EXPECT_EQ(v, 0.0) << name;
  });
}

TEST(Backward, GradientsAccumulate) {
  const auto spec = tiny_spec(3, 3, 4, 3);
  const auto p = init_params(spec, 9);
  Engine rng(0);
  const auto cache = network_forward(std::vector<double>{0.25, 0.5, 0.75}, p, spec, Mode::Train, rng);
  const auto once = network_backward(cache, p, 1);
  NetworkParams twice = once;
  network_backward(cache, p, 1, twice);
  std::vector<double> a, b;
  once.for_each([&](const std::string&, const Tensor& t) { a.insert(a.end(), t.data.begin(), t.data.end()); });
  twice.for_each([&](const std::string&, const Tensor& t) { b.insert(b.end(), t.data.begin(), t.data.end()); });
  ASSERT_EQ(a.size(), b.size());
  // Per-timestep sums restart from a nonzero value, so only rounding may differ.
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(b[k], 2.0 * a[k], 1e-14 * std::max(1.0, std::abs(a[k]))) << k;
}

TEST(Backward, StaleCacheRejected) {
  const auto spec = tiny_spec(3, 3, 4, 3);
  auto p = init_params(spec, 9);
  Engine rng(0);
  EXPECT_CODE(network_backward(ForwardCache{}, p, 0), ErrorCode::StaleCache);
  const auto cache = network_forward(std::vector<double>{0.25, 0.5, 0.75}, p, spec, Mode::Train, rng);
  const NetworkParams copy = p;
  EXPECT_CODE(network_backward(cache, copy, 0), ErrorCode::StaleCache);
  ++p.revision;
  EXPECT_CODE(network_backward(cache, p, 0), ErrorCode::StaleCache);
}

TEST(Backward, FiniteDifferencesThroughDropoutMasks) {
  // With dropout on, replaying the same rng state reproduces the masks, so the
  // loss is a smooth function of the parameters and central differences apply.
  auto spec = tiny_spec(4, 3, 5, 4);
  spec.dropout = 0.4;
  auto p = init_params(spec, 21);
  const std::vector<double> x{0.0, 0.2, 0.8, 0.4};
  const TokenId target = 3;
  const Engine start(777);
  Engine rng = start;
  const auto cache = network_forward(x, p, spec, Mode::Train, rng);
  const auto analytic = network_backward(cache, p, target);
  std::size_t zero_mask = 0;
  for (double m : cache.seq_mask[0]) zero_mask += m == 0.0;
  ASSERT_GT(zero_mask, 0u);

  auto loss = [&](const NetworkParams& q) {
    Engine r = start;
    return cross_entropy(network_forward(x, q, spec, Mode::Train, r).dist, target);
  };
  const double h = 1e-5;
  std::vector<const Tensor*> grads;
  analytic.for_each([&](const std::string&, const Tensor& t) { grads.push_back(&t); });
  std::size_t ti = 0;
  double worst = 0.0;
  p.for_each([&](const std::string& name, Tensor& t) {
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double saved = t[k];
      t[k] = saved + h;
      const double up = loss(p);
      t[k] = saved - h;
      const double down = loss(p);
      t[k] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = (*grads[ti])[k];
      worst = std::max(worst, std::abs(a - numeric) / (1e-7 + std::abs(numeric)));
      ASSERT_NEAR(a, numeric, 1e-8 + 1e-5 * std::abs(numeric)) << name << "[" << k << "]";
    }
    ++ti;
  });
  RecordProperty("worst_relative_error", std::to_string(worst));
}

TEST(GradientCheck, TwentyRandomTinyNetworks) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    NetworkSpec spec = tiny_spec(3 + seed % 6, 2 + seed % 5, 4 + seed % 7, 5);
    spec.dropout = 0.3;  // the check must switch it off itself
    const auto report = gradient_check(spec, seed);
    ASSERT_EQ(report.checked, init_params(spec, seed).count());
    EXPECT_LT(report.max_rel_error, 1e-4) << "seed " << seed << " worst " << report.worst_param << " analytic "
                                          << report.worst_analytic << " numeric " << report.worst_numeric;
    worst = std::max(worst, report.max_rel_error);
  }
  RecordProperty("max_rel_error", std::to_string(worst));
}

TEST(GradientCheck, ReluVariant) {
  NetworkSpec spec = tiny_spec(4, 6, 5, 4);
  spec.dense_relu = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) EXPECT_LT(gradient_check(spec, seed).max_rel_error, 1e-4);
}

TEST(GradientCheck, ZeroedForgetGateGradientIsCaught) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto spec = tiny_spec(4, 3, 5, 5);
    const auto report = gradient_check(spec, seed, GradientFault::ZeroForgetGate);
    EXPECT_GT(report.max_rel_error, 1e-2) << "seed " << seed;
    EXPECT_EQ(report.worst_param.rfind("lstm", 0), 0u) << report.worst_param;
  }
}

TEST(GradientCheck, ZeroNetworkHasNoRecurrentGradientAtFirstStep) {
  const auto spec = tiny_spec(3, 3, 4, 1);
  const auto p = zero_params(spec);
  const std::vector<double> x{0.5};
  Engine rng(0);
  const auto cache = network_forward(x, p, spec, Mode::Train, rng);
  const auto g = network_backward(cache, p, 0);
  for (const auto& layer : g.lstm)
    for (double v : layer.U.data) EXPECT_EQ(v, 0.0);
  const auto report = gradient_check(p, spec, x, 0);
  EXPECT_LT(report.max_rel_error, 1e-4);
  // Numeric recurrent gradients vanish as well.
  NetworkParams q = p;
  q.lstm[1].U[0] = 1e-5;
  const double up = window_loss(x, 0, q, spec);
  q.lstm[1].U[0] = -1e-5;
  const double down = window_loss(x, 0, q, spec);
  EXPECT_NEAR((up - down) / 2e-5, 0.0, 1e-9);
}

TEST(GradientCheck, RelativeErrorFloor) {
  EXPECT_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1e-10, 0.0), 1e-10 / 1e-8);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
}
