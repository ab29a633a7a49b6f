#include "htmllstm/optim.hpp"
#include "htmllstm/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

namespace htmllstm {
namespace {

using testing::max_relative_error;
using testing::numeric_gradient;
using testing::random_tensor;

// Runs op on a fresh tape, reduces with a fixed random projection so every
// output coordinate matters, and compares tape gradients against central
// differences for each input.
void check_op(const std::function<Var(Tape&, std::vector<Var>&)>& op, std::vector<Tensor> inputs,
              double tol = 1e-6) {
  Rng rng(99);
  Tensor projection;
  auto value_at = [&](const std::vector<Tensor>& in) {
    Tape t;
    std::vector<Var> vars;
    for (const auto& x : in) vars.push_back(t.leaf(x));
    Var out = op(t, vars);
    if (projection.empty()) projection = random_tensor(out.rows(), out.cols(), rng);
    return (out.value().arr() * projection.arr()).sum();
  };
  value_at(inputs);
  Tape t;
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(t.leaf(x));
  Var out = op(t, vars);
  Var loss = sum(mul(out, t.constant(projection)));
  t.backward(loss);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto f = [&](const Tensor& xk) {
      auto in = inputs;
      in[k] = xk;
      return value_at(in);
    };
    Tensor numeric = numeric_gradient(f, inputs[k]);
    EXPECT_LT(max_relative_error(t.grad(vars[k]), numeric), tol) << "input " << k;
  }
}

TEST(Primitives, AnalyticValues) {
  Tape t;
  Var z = t.constant(Tensor(1, 1, 0.0));
  EXPECT_DOUBLE_EQ(sigmoid(z).value()[0], 0.5);
  EXPECT_DOUBLE_EQ(tanh(z).value()[0], 0.0);
}

TEST(Primitives, SoftmaxColumnsSumToOne) {
  Rng rng(3);
  Tape t;
  Var p = softmax(t.constant(random_tensor(7, 5, rng, -30, 30)));
  for (std::size_t j = 0; j < 5; ++j) {
    double s = 0;
    for (std::size_t c = 0; c < 7; ++c) s += p.value()(c, j);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Primitives, SigmoidDerivativeAtZero) {
  Tape t;
  Var x = t.leaf(Tensor::scalar(0.0));
  t.backward(sigmoid(x));
  EXPECT_NEAR(t.grad(x)[0], 0.25, 1e-15);
}

TEST(Primitives, SharedSubexpressionAccumulates) {
  Tape t;
  Var x = t.leaf(Tensor::scalar(1.7));
  t.backward(mul(x, x));
  EXPECT_DOUBLE_EQ(t.grad(x)[0], 2 * 1.7);
}

TEST(Primitives, ShapeMismatchThrows) {
  Tape t;
  Var a = t.constant(Tensor(2, 3));
  Var b = t.constant(Tensor(2, 3));
  EXPECT_THROW(matmul(a, b), ShapeMismatch);
  EXPECT_THROW(add(a, t.constant(Tensor(3, 2))), ShapeMismatch);
  EXPECT_THROW(concat_rows({a, t.constant(Tensor(1, 2))}), ShapeMismatch);
}

TEST(Primitives, GradientsMatchFiniteDifferences) {
  Rng rng(11);
  auto r = [&](std::size_t a, std::size_t b) { return random_tensor(a, b, rng); };
  auto pos = [&](std::size_t a, std::size_t b) { return random_tensor(a, b, rng, 0.2, 2.0); };
  check_op([](Tape&, auto& v) { return matmul(v[0], v[1]); }, {r(3, 4), r(4, 2)});
  check_op([](Tape&, auto& v) { return add(v[0], v[1]); }, {r(3, 2), r(3, 2)});
  check_op([](Tape&, auto& v) { return sub(v[0], v[1]); }, {r(3, 2), r(3, 2)});
  check_op([](Tape&, auto& v) { return add_broadcast(v[0], v[1]); }, {r(3, 4), r(3, 1)});
  check_op([](Tape&, auto& v) { return mul(v[0], v[1]); }, {r(3, 2), r(3, 2)});
  check_op([](Tape&, auto& v) { return div(v[0], v[1]); }, {r(3, 2), pos(3, 2)});
  check_op([](Tape&, auto& v) { return affine(v[0], -1.5, 0.3); }, {r(2, 2)});
  check_op([](Tape&, auto& v) { return concat_rows({v[0], v[1]}); }, {r(2, 3), r(4, 3)});
  check_op([](Tape&, auto& v) { return concat_cols({v[0], v[1]}); }, {r(3, 1), r(3, 2)});
  check_op([](Tape&, auto& v) { return slice(v[0], 1, 2, 1, 2); }, {r(4, 4)});
  check_op([](Tape&, auto& v) { return sigmoid(v[0]); }, {r(5, 2)});
  check_op([](Tape&, auto& v) { return tanh(v[0]); }, {r(5, 2)});
  check_op([](Tape&, auto& v) { return softmax(v[0]); }, {r(5, 3)});
  check_op([](Tape&, auto& v) { return log(v[0]); }, {pos(3, 3)});
  check_op([](Tape&, auto& v) { return pow(v[0], 2.5); }, {pos(3, 3)});
  check_op([](Tape&, auto& v) { return pow(v[0], 2.0); }, {r(3, 3)});
  check_op([](Tape&, auto& v) { return clamp_min(v[0], 0.5); }, {pos(3, 3)});
  check_op([](Tape&, auto& v) { return sum(v[0]); }, {r(3, 3)});
  check_op([](Tape&, auto& v) { return sum_cols(v[0]); }, {r(3, 4)});
  check_op([](Tape&, auto& v) { return embedding_lookup(v[0], {2, 0, 2}); }, {r(4, 3)});
}

TEST(Primitives, EmbeddingIndexOutOfRange) {
  Tape t;
  EXPECT_THROW(embedding_lookup(t.constant(Tensor(3, 2)), {3}), IndexOutOfRange);
}

TEST(LstmCell, ZeroWeightsZeroState) {
  Tape t;
  LstmWeights w{t.constant(Tensor(16, 3)), t.constant(Tensor(16, 4)), t.constant(Tensor(16, 1))};
  auto s = lstm_cell(t.constant(Tensor(3, 1, 1.0)), t.constant(Tensor(4, 1)), t.constant(Tensor(4, 1)), w);
  for (double v : s.h.value().data()) EXPECT_EQ(v, 0.0);
  for (double v : s.c.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(LstmCell, ZeroWeightsCarryHalfOfPreviousCell) {
  Tape t;
  LstmWeights w{t.constant(Tensor(8, 2)), t.constant(Tensor(8, 2)), t.constant(Tensor(8, 1))};
  Tensor v = Tensor::column({1.3, -0.4});
  auto s = lstm_cell(t.constant(Tensor(2, 1, 0.7)), t.constant(Tensor(2, 1, 0.2)), t.constant(v), w);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_NEAR(s.c.value()[k], 0.5 * v[k], 1e-15);
    EXPECT_NEAR(s.h.value()[k], 0.5 * std::tanh(0.5 * v[k]), 1e-15);
  }
}

TEST(LstmCell, GradientsMatchFiniteDifferences) {
  Rng rng(5);
  const std::size_t h = 8, d = 8;
  std::vector<Tensor> in{random_tensor(d, 1, rng), random_tensor(h, 1, rng), random_tensor(h, 1, rng),
                         random_tensor(4 * h, d, rng, -0.5, 0.5), random_tensor(4 * h, h, rng, -0.5, 0.5),
                         random_tensor(4 * h, 1, rng, -0.5, 0.5)};
  check_op(
      [](Tape&, auto& v) {
        auto s = lstm_cell(v[0], v[1], v[2], LstmWeights{v[3], v[4], v[5]});
        return concat_rows({s.h, s.c});
      },
      in, 1e-4);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParamStore ps;
  ps.add("w", Tensor::column({0.3, -1.2}));
  const ParamStore before = ps;
  GradStore g(ps);
  AdamState st(ps);
  adam_step(ps, g, st, OptimConfig{}, 0);
  EXPECT_EQ(ps, before);
}

TEST(Adam, FirstStepMovesByAlpha) {
  ParamStore ps;
  ps.add("w", Tensor::scalar(2.0));
  GradStore g(ps);
  g[0][0] = 1.0;
  AdamState st(ps);
  OptimConfig cfg;
  adam_step(ps, g, st, cfg, 0);
  // m_hat = v_hat = 1, so the step is alpha / (1 + eps).
  EXPECT_NEAR(ps.value(0)[0], 2.0 - cfg.alpha / (1.0 + cfg.epsilon), 1e-15);
}

TEST(Adam, LearningRateHalvesEveryFifteenEpochs) {
  OptimConfig cfg;
  EXPECT_DOUBLE_EQ(effective_learning_rate(cfg, 0), 1e-2);
  EXPECT_DOUBLE_EQ(effective_learning_rate(cfg, 14), 1e-2);
  EXPECT_DOUBLE_EQ(effective_learning_rate(cfg, 15), 5e-3);
  EXPECT_DOUBLE_EQ(effective_learning_rate(cfg, 49), 1e-2 / 8);
}

TEST(Adam, ShapeMismatchThrows) {
  ParamStore ps;
  ps.add("w", Tensor(2, 1));
  GradStore g;
  AdamState st(ps);
  EXPECT_THROW(adam_step(ps, g, st, OptimConfig{}, 0), ShapeMismatch);
}

TEST(Adam, Deterministic) {
  ParamStore a;
  a.add("w", Tensor::column({0.1, 0.2, 0.3}));
  ParamStore b = a;
  GradStore g(a);
  g[0][1] = 0.5;
  AdamState sa(a), sb(b);
  for (int e = 0; e < 3; ++e) {
    adam_step(a, g, sa, OptimConfig{}, e);
    adam_step(b, g, sb, OptimConfig{}, e);
  }
  EXPECT_EQ(a, b);
}

TEST(Dropout, IdentityWhenEvaluatingOrPZero) {
  Tape t;
  Var x = t.constant(Tensor(4, 4, 1.5));
  EXPECT_EQ(dropout(x, 0.5, 1, false).value(), x.value());
  EXPECT_EQ(dropout(x, 0.0, 1, true).value(), x.value());
}

TEST(Dropout, ReplayableMaskAndScaling) {
  Tape t;
  Var x = t.constant(Tensor(20, 20, 1.0));
  const Tensor a = dropout(x, 0.5, 42, true).value();
  const Tensor b = dropout(x, 0.5, 42, true).value();
  EXPECT_EQ(a, b);
  std::size_t zeros = 0;
  for (double v : a.data()) {
    EXPECT_TRUE(v == 0.0 || v == 2.0);
    zeros += v == 0.0;
  }
  EXPECT_GT(zeros, 150u);
  EXPECT_LT(zeros, 250u);
  EXPECT_NE(dropout(x, 0.5, 43, true).value(), a);
}

TEST(GradCheck, QuadraticIsExact) {
  ParamStore ps;
  Rng rng(1);
  ps.add("a.w", random_tensor(4, 3, rng));
  ps.add("b.v", random_tensor(5, 1, rng));
  DifferentiableLoss loss = [](const ParamStore& p, GradStore* g) {
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      s += 0.5 * p.value(i).arr().square().sum();
      if (g) (*g)[i] = p.value(i);
    }
    return s;
  };
  auto report = grad_check(loss, ps);
  EXPECT_LT(report.max_relative_error, 1e-8);
  EXPECT_EQ(report.per_group.size(), 2u);
}

TEST(GradCheck, DetectsNonDeterministicLoss) {
  ParamStore ps;
  ps.add("w", Tensor(3, 1, 0.5));
  std::uint64_t calls = 0;
  DifferentiableLoss loss = [&](const ParamStore& p, GradStore* g) {
    Tape t;
    Var w = t.parameter(p, 0);
    Var y = sum(dropout(w, 0.5, ++calls, true));
    if (g) {
      t.backward(y);
      t.accumulate_parameter_grads(*g);
    }
    return y.value()[0];
  };
  EXPECT_THROW(grad_check(loss, ps), NonDeterministicLoss);
}

}  // namespace
}  // namespace htmllstm
