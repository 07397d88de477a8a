#include "iega/autodiff.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "iega/error.hpp"

namespace iega::ad {
namespace {

Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(numel_of(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v));
}

TEST(TensorTest, RejectsNonFiniteAndSizeMismatch) {
  EXPECT_THROW(Tensor({2}, {1.0, NAN}), NumericError);
  EXPECT_THROW(Tensor({2}, {1.0, INFINITY}), NumericError);
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  EXPECT_EQ(Tensor().numel(), 1u);
}

TEST(TapeTest, RecordAddOfScalars) {
  Tape tape;
  const Var a = tape.leaf(Tensor::scalar(2.0));
  const Var b = tape.leaf(Tensor::scalar(3.0));
  const Var c = tape.record(Op::kAdd, {a.id(), b.id()});
  EXPECT_EQ(c.value().item(), 5.0);
  EXPECT_EQ(tape.node(c.id()).inputs, (std::vector<NodeId>{a.id(), b.id()}));
}

TEST(TapeTest, RecordMatmulShapeRule) {
  Tape tape;
  const Var a = tape.leaf(Tensor::zeros({2, 3}));
  const Var b = tape.leaf(Tensor::zeros({3, 1}));
  EXPECT_EQ(matmul(a, b).shape(), (Shape{2, 1}));
}

TEST(TapeTest, RecordAddShapeMismatch) {
  Tape tape;
  const Var a = tape.leaf(Tensor::zeros({2, 3}));
  const Var b = tape.leaf(Tensor::zeros({3, 2}));
  EXPECT_THROW(tape.record("add", {a.id(), b.id()}), ShapeError);
}

TEST(TapeTest, RecordUnknownTagAndMissingInput) {
  Tape tape;
  const Var a = tape.leaf(Tensor::scalar(1.0));
  EXPECT_THROW(tape.record("frobnicate", {a.id()}), std::invalid_argument);
  EXPECT_THROW(tape.record("tanh", {a.id() + 7}), std::invalid_argument);
  EXPECT_THROW(tape.record("add", {a.id()}), ShapeError);
}

TEST(TapeTest, OpNamesRoundTrip) {
  for (int i = 0; i <= static_cast<int>(Op::kReshape); ++i) {
    const auto op = static_cast<Op>(i);
    EXPECT_EQ(op_from_name(op_name(op)), op);
  }
}

TEST(GradTest, SquareAtThree) {
  Tape tape;
  const Var x = tape.leaf(Tensor::scalar(3.0));
  const std::vector<Var> wrt{x};
  EXPECT_DOUBLE_EQ(tape.grad(x * x, wrt)[0].item(), 6.0);
}

TEST(GradTest, SecondDerivativeOfCube) {
  Tape tape;
  const Var x = tape.leaf(Tensor::scalar(2.0));
  const Var y = x * x * x;
  const std::vector<Var> wrt{x};
  const Var dy = tape.grad_graph(y, wrt)[0];
  EXPECT_DOUBLE_EQ(dy.value().item(), 12.0);
  EXPECT_DOUBLE_EQ(tape.grad(dy, wrt)[0].item(), 12.0);
}

TEST(GradTest, SoftmaxCrossEntropyAtUniformLogits) {
  Tape tape;
  const Var z = tape.leaf(Tensor::row({0.0, 0.0, 0.0}));
  const Var onehot = tape.constant(Tensor::row({1.0, 0.0, 0.0}));
  const Var loss = scale(log(dot(softmax(z), onehot)), -1.0);
  const std::vector<Var> wrt{z};
  const Tensor g = tape.grad(loss, wrt)[0];
  EXPECT_NEAR(g[0], -2.0 / 3.0, 1e-15);
  EXPECT_NEAR(g[1], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(g[2], 1.0 / 3.0, 1e-15);
}

TEST(GradTest, NonScalarTargetRejected) {
  Tape tape;
  const Var x = tape.leaf(Tensor::row({1.0, 2.0}));
  const std::vector<Var> wrt{x};
  EXPECT_THROW(tape.grad(x, wrt), ShapeError);
}

TEST(GradTest, UnreachableWrtGivesZeros) {
  Tape tape;
  const Var x = tape.leaf(Tensor::scalar(1.5));
  const Var unused = tape.leaf(Tensor::zeros({2, 2}));
  const std::vector<Var> wrt{x, unused};
  const auto g = tape.grad(x * x, wrt);
  EXPECT_EQ(g[1], Tensor::zeros({2, 2}));
}

TEST(GradTest, AbsSubgradientAtZero) {
  Tape tape;
  const Var x = tape.leaf(Tensor::row({0.0, -2.0, 3.0}));
  const std::vector<Var> wrt{x};
  const Tensor g = tape.grad(sum(abs(x)), wrt)[0];
  EXPECT_EQ(g, Tensor::row({0.0, -1.0, 1.0}));
}

TEST(CheckGradientTest, SquareAtThree) {
  const ScalarFunction f = [](Tape&, Var x) { return sum(x * x); };
  EXPECT_LT(check_gradient(f, Tensor::scalar(3.0), 1e-5), 1e-6);
}

TEST(CheckGradientTest, SumTanhRandomVector) {
  std::mt19937_64 rng(7);
  const ScalarFunction f = [](Tape&, Var x) { return sum(tanh(x)); };
  EXPECT_LT(check_gradient(f, random_tensor(rng, {4}), 1e-5), 1e-5);
}

TEST(CheckGradientTest, RejectsNonPositiveStep) {
  const ScalarFunction f = [](Tape&, Var x) { return sum(x); };
  EXPECT_THROW(check_gradient(f, Tensor::scalar(1.0), 0.0), std::invalid_argument);
}

TEST(CheckGradientTest, NonFiniteEvaluationIsInfinite) {
  const ScalarFunction f = [](Tape&, Var x) { return sum(log(x)); };
  EXPECT_TRUE(std::isinf(check_gradient(f, Tensor::scalar(0.0), 1e-5)));
}

// Each primitive wrapped into a scalar by a random linear read-out, so every
// input coordinate carries a generic, non-vanishing gradient.
struct PrimitiveCase {
  const char* name;
  Shape input;
  std::function<Var(Tape&, Var, std::mt19937_64&)> build;
};

std::vector<PrimitiveCase> primitive_cases() {
  auto readout = [](Tape& t, Var y, std::mt19937_64& rng) {
    return dot(y, t.constant(random_tensor(rng, y.shape(), 0.5, 1.5)));
  };
  return {
      {"add", {2, 3}, [=](Tape& t, Var x, std::mt19937_64& r) {
         return readout(t, add(x, t.constant(random_tensor(r, {2, 3}))), r); }},
      {"add_broadcast", {1}, [=](Tape& t, Var x, std::mt19937_64& r) {
         return readout(t, add(t.constant(random_tensor(r, {2, 3})), x), r); }},
      {"sub", {2, 3}, [=](Tape& t, Var x, std::mt19937_64& r) {
         return readout(t, sub(t.constant(random_tensor(r, {2, 3})), x), r); }},
      {"mul", {2, 3}, [=](Tape& t, Var x, std::mt19937_64& r) {
         return readout(t, mul(x, x), r); }},
      {"div", {2, 3}, [=](Tape& t, Var x, std::mt19937_64& r) {
         const Var d = t.constant(random_tensor(r, {2, 3}, 1.0, 2.0));
         return readout(t, add(div(x, d), div(d, add(x, t.constant(Tensor::scalar(3.0))))), r); }},
      {"matmul", {2, 3}, [=](Tape& t, Var x, std::mt19937_64& r) {
         return readout(t, matmul(x, transpose(x)), r); }},
      {"gather", {4, 2}, [=](Tape& t, Var x, std::mt19937_64& r) {
         return readout(t, gather(x, {3, 0, 3, 1}), r); }},
      {"scatter_rows", {2, 2}, [=](Tape& t, Var x, std::mt19937_64& r) {
         return readout(t, scatter_rows(x, {2, 0}, 3), r); }},
      {"sum_mean", {3, 2}, [=](Tape&, Var x, std::mt19937_64&) {
         return add(sum(mul(x, x)), mean(x)); }},
      {"tanh", {2, 3}, [=](Tape& t, Var x, std::mt19937_64& r) {
         return readout(t, tanh(x), r); }},
      {"relu", {2, 3}, [=](Tape& t, Var x, std::mt19937_64& r) {
         return readout(t, mul(relu(x), x), r); }},
      {"exp", {2, 3}, [=](Tape& t, Var x, std::mt19937_64& r) {
         return readout(t, exp(x), r); }},
      {"log", {2, 3}, [=](Tape& t, Var x, std::mt19937_64& r) {
         return readout(t, log(add(x, t.constant(Tensor::scalar(2.0)))), r); }},
      {"softmax", {1, 4}, [=](Tape& t, Var x, std::mt19937_64& r) {
         return readout(t, softmax(x), r); }},
      {"dot", {2, 3}, [=](Tape& t, Var x, std::mt19937_64& r) {
         return mul(dot(x, t.constant(random_tensor(r, {2, 3}))), dot(x, x)); }},
      {"abs", {2, 3}, [=](Tape& t, Var x, std::mt19937_64& r) {
         return readout(t, mul(abs(x), x), r); }},
      {"scale", {2, 3}, [=](Tape& t, Var x, std::mt19937_64& r) {
         return readout(t, scale(mul(x, x), -2.5), r); }},
      {"concat_slice", {2, 3}, [=](Tape& t, Var x, std::mt19937_64& r) {
         const std::vector<Var> parts{x, tanh(x), x};
         return readout(t, slice_rows(concat(parts), 1, 4), r); }},
      {"expand_reshape", {2, 3}, [=](Tape& t, Var x, std::mt19937_64& r) {
         return readout(t, mul(expand(sum(x), {3, 2}), reshape(x, {3, 2})), r); }},
  };
}

TEST(GradientPropertyTest, PrimitivesMatchFiniteDifferencesOverSeeds) {
  for (const auto& c : primitive_cases()) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      std::mt19937_64 point_rng(seed);
      Tensor point = random_tensor(point_rng, c.input);
      const ScalarFunction f = [&c, seed](Tape& t, Var x) {
        std::mt19937_64 rng(seed * 7919 + 13);
        return c.build(t, x, rng);
      };
      // Keep away from the kinks of relu/abs.
      bool near_kink = false;
      for (double v : point.values()) near_kink = near_kink || std::fabs(v) < 1e-3;
      if (near_kink) continue;
      const double err = check_gradient(f, point, 1e-5);
      ASSERT_LT(err, 1e-5) << c.name << " seed " << seed;
    }
  }
}

// h(theta) = sum_k (d f / d x)_k c_k, differentiated once more w.r.t. theta.
TEST(GradientPropertyTest, ReverseOverReverseMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const Tensor x0 = random_tensor(rng, {2, 3});
    const Tensor theta0 = random_tensor(rng, {3, 2});
    const Tensor c = random_tensor(rng, {2, 3});

    auto build_f = [](Var x, Var theta) {
      const Var h = tanh(matmul(x, theta));
      return add(dot(softmax(reshape(h, {1, 4})), reshape(exp(h), {1, 4})),
                 sum(mul(abs(h), h)));
    };
    auto first_order = [&](const Tensor& theta) {
      Tape tape;
      const Var x = tape.leaf(x0);
      const Var th = tape.leaf(theta);
      const std::vector<Var> wrt{x};
      return dot(tape.grad(build_f(x, th), wrt)[0], c).item();
    };

    Tape tape;
    const Var x = tape.leaf(x0);
    const Var theta = tape.leaf(theta0);
    const std::vector<Var> wrt_x{x};
    const Var gx = tape.grad_graph(build_f(x, theta), wrt_x)[0];
    const Var h = dot(gx, tape.constant(c));
    const std::vector<Var> wrt_theta{theta};
    const Tensor analytic = tape.grad(h, wrt_theta)[0];

    std::vector<double> probe(theta0.values().begin(), theta0.values().end());
    const double step = 1e-5;
    for (std::size_t i = 0; i < probe.size(); ++i) {
      const double saved = probe[i];
      probe[i] = saved + step;
      const double up = first_order(Tensor(theta0.shape(), probe));
      probe[i] = saved - step;
      const double down = first_order(Tensor(theta0.shape(), probe));
      probe[i] = saved;
      const double numeric = (up - down) / (2 * step);
      const double denom = std::max({std::fabs(numeric), std::fabs(analytic[i]), 1e-8});
      ASSERT_LT(std::fabs(numeric - analytic[i]) / denom, 1e-4) << "seed " << seed;
    }
  }
}

TEST(GradientPropertyTest, CreateGraphDoesNotChangeFirstOrderValues) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    Tape tape;
    const Var x = tape.leaf(random_tensor(rng, {3, 4}));
    const Var w = tape.leaf(random_tensor(rng, {4, 2}));
    const Var y = sum(mul(tanh(matmul(x, w)), softmax(matmul(x, w))));
    const std::vector<Var> wrt{x, w};
    const auto plain = tape.grad(y, wrt);
    const auto graph = tape.grad_graph(y, wrt);
    for (std::size_t k = 0; k < wrt.size(); ++k) EXPECT_EQ(plain[k], graph[k].value());
  }
}

TEST(TapeTest, DeterministicAndReplayable) {
  auto run = [] {
    std::mt19937_64 rng(99);
    Tape tape;
    const Var x = tape.leaf(random_tensor(rng, {2, 3}));
    const Var w = tape.leaf(random_tensor(rng, {3, 3}));
    const Var y = sum(exp(scale(matmul(x, w), 0.3)));
    const std::vector<Var> wrt{x, w};
    const auto g = tape.grad_graph(y, wrt);
    const auto gg = tape.grad(dot(g[0], g[0]), wrt);
    EXPECT_TRUE(tape.replay_matches());
    EXPECT_GT(tape.generation(), 0u);
    return gg;
  };
  EXPECT_EQ(run(), run());
}

TEST(TapeTest, DumpListsEveryNode) {
  Tape tape;
  const Var a = tape.leaf(Tensor::zeros({2, 3}));
  const Var b = tape.leaf(Tensor::zeros({3, 1}));
  matmul(a, b);
  std::ostringstream out;
  tape.dump(out);
  EXPECT_EQ(out.str(), "0 leaf [] [2x3] g0\n1 leaf [] [3x1] g0\n2 matmul [0,1] [2x1] g0\n");
}

}  // namespace
}  // namespace iega::ad
