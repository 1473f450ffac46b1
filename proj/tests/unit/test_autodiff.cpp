#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "langtime/autodiff/gradcheck.hpp"
#include "langtime/autodiff/graph.hpp"

using langtime::ad::Graph;
using langtime::ad::GraphError;
using langtime::ad::NonFiniteError;
using langtime::ad::Shape;
using langtime::ad::Tensor;
using langtime::ad::Var;

namespace {

Tensor RandomTensor(std::mt19937_64& rng, Shape shape, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Values bounded away from zero, signs mixed.
Tensor AwayFromZero(std::mt19937_64& rng, Shape shape, double lo, double hi) {
  Tensor t = RandomTensor(rng, std::move(shape), lo, hi);
  std::bernoulli_distribution flip(0.5);
  for (auto& v : t.data()) v = flip(rng) ? -v : v;
  return t;
}

// Reduces an arbitrary node to a scalar through a fixed random projection so
// every output entry carries a distinct weight.
Var Project(Graph& g, Var y, std::mt19937_64& rng) {
  Var w = g.Constant(RandomTensor(rng, g.shape(y), -1.0, 1.0));
  return g.Sum(g.Mul(y, w));
}

double CheckOp(const std::function<Var(Graph&, std::mt19937_64&, std::vector<Var>&)>& build,
               int seeds) {
  double worst = 0.0;
  for (int seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed) + 1000);
    Graph g;
    std::vector<Var> leaves;
    Var y = build(g, rng, leaves);
    Var loss = Project(g, y, rng);
    auto r = langtime::ad::FiniteDifferenceCheck(g, loss, leaves, 1e-5);
    worst = std::max(worst, r.max_relative_error);
  }
  return worst;
}

}  // namespace

TEST_CASE("forward values on hand examples") {
  Graph g;
  Var a = g.Constant(Tensor::Matrix({{1, 2}, {3, 4}}));
  Var b = g.Constant(Tensor::Matrix({{1}, {1}}));
  Var c = g.MatMul(a, b);
  CHECK(g.shape(c) == Shape{2, 1});
  CHECK(g.value(c)[0] == 3.0);
  CHECK(g.value(c)[1] == 7.0);

  Var z = g.Constant(Tensor::Scalar(0.0));
  CHECK(g.value(g.Tanh(z)).item() == 0.0);

  Var s = g.Softmax(g.Constant(Tensor::Vector({0, 0, 0})));
  for (double v : g.value(s).data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("backprop on hand examples") {
  SUBCASE("x squared") {
    Graph g;
    Var x = g.Input("x", Tensor::Scalar(3.0));
    auto grads = g.Backpropagate(g.Square(x));
    CHECK(grads[x].item() == 6.0);
  }
  SUBCASE("tanh at zero") {
    Graph g;
    Var x = g.Input("x", Tensor::Scalar(0.0));
    auto grads = g.Backpropagate(g.Tanh(x));
    CHECK(grads[x].item() == 1.0);
  }
  SUBCASE("mean huber matches central differences") {
    // Frozen from central differences with h = 1e-6 on
    // f(r) = mean(huber(r, 1)) at r = [0.5, 2].
    auto f = [](double r0, double r1) {
      auto hub = [](double r) {
        return std::abs(r) <= 1.0 ? 0.5 * r * r : std::abs(r) - 0.5;
      };
      return 0.5 * (hub(r0) + hub(r1));
    };
    const double h = 1e-6;
    const double fd0 = (f(0.5 + h, 2.0) - f(0.5 - h, 2.0)) / (2 * h);
    const double fd1 = (f(0.5, 2.0 + h) - f(0.5, 2.0 - h)) / (2 * h);
    CHECK(fd0 == doctest::Approx(0.25).epsilon(1e-8));
    CHECK(fd1 == doctest::Approx(0.5).epsilon(1e-8));

    Graph g;
    Var r = g.Input("r", Tensor::Vector({0.5, 2.0}));
    auto grads = g.Backpropagate(g.Mean(g.Huber(r, 1.0)));
    CHECK(grads[r][0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(grads[r][1] == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("errors name the offending node") {
  Graph g;
  Var a = g.Constant(Tensor({2, 3}));
  Var b = g.Constant(Tensor({2, 3}));
  CHECK_THROWS_AS(g.MatMul(a, b), GraphError);
  try {
    g.MatMul(a, b);
  } catch (const GraphError& e) {
    CHECK(e.node() == 2);
    CHECK(std::string(e.what()).find("matmul") != std::string::npos);
  }
  Var big = g.Constant(Tensor::Scalar(1000.0));
  CHECK_THROWS_AS(g.Exp(big), NonFiniteError);
  CHECK_THROWS_AS(g.Backpropagate(a), GraphError);
  CHECK(g.size() == 3);  // failed nodes are not kept
}

TEST_CASE("floors keep log and reciprocal finite") {
  Graph g;
  Var x = g.Input("x", Tensor::Vector({0.0, -1e-12, 2.0}));
  Var r = g.Reciprocal(x);
  CHECK(g.value(r)[0] == doctest::Approx(1e8));
  CHECK(g.value(r)[1] == doctest::Approx(-1e8));
  Var l = g.Log(x);
  CHECK(g.value(l)[0] == doctest::Approx(std::log(1e-8)));
  auto grads = g.Backpropagate(g.Add(g.Sum(r), g.Sum(l)));
  CHECK(grads[x][0] == 0.0);
  CHECK(grads[x][1] == 0.0);
  CHECK(grads[x][2] == doctest::Approx(-0.25 + 0.5));
}

TEST_CASE("unused and detached leaves get exact zero gradient") {
  Graph g;
  Var used = g.Input("used", Tensor::Vector({1.0, 2.0}));
  Var unused = g.Input("unused", Tensor::Vector({3.0}));
  Var detached = g.Input("detached", Tensor::Vector({4.0, 5.0}));
  Var loss = g.Sum(g.Mul(g.Square(used), g.StopGradient(g.Tanh(detached))));
  auto grads = g.Backpropagate(loss);
  CHECK(grads[unused][0] == 0.0);
  CHECK(grads[detached][0] == 0.0);
  CHECK(grads[detached][1] == 0.0);
  CHECK(grads[used][0] == doctest::Approx(2.0 * std::tanh(4.0)));
}

TEST_CASE("evaluate is referentially transparent and rebinds inputs") {
  std::mt19937_64 rng(3);
  Graph g;
  Var x = g.Input("x", RandomTensor(rng, {4, 5}, -1, 1));
  Var w = g.Input("w", RandomTensor(rng, {5, 3}, -1, 1));
  Var y = g.Softmax(g.Tanh(g.MatMul(x, w)));
  g.Name(y, "y");
  auto first = g.Evaluate();
  auto second = g.Evaluate();
  CHECK(first.at("y") == second.at("y"));

  Tensor x2 = RandomTensor(rng, {4, 5}, -1, 1);
  auto rebound = g.Evaluate({{"x", x2}});
  CHECK_FALSE(rebound.at("y") == first.at("y"));
  CHECK(g.value(x) == x2);
  CHECK_THROWS(g.Evaluate({{"nope", x2}}));
  CHECK_THROWS_AS(g.Evaluate({{"x", Tensor({3, 5})}}), GraphError);
}

TEST_CASE("quadratic loss gradient check is exact to roundoff") {
  std::mt19937_64 rng(11);
  Graph g;
  Var x = g.Input("x", RandomTensor(rng, {6}, -2, 2));
  Var loss = g.Sum(g.Square(g.Shift(x, 0.3)));
  auto r = langtime::ad::FiniteDifferenceCheck(g, loss, {x}, 1e-5);
  CHECK(r.max_relative_error < 1e-8);
}

TEST_CASE("gradient of a sum of losses is the sum of gradients") {
  std::mt19937_64 rng(5);
  Graph g;
  Var x = g.Input("x", RandomTensor(rng, {3, 4}, -1, 1));
  Var w = g.Input("w", RandomTensor(rng, {4, 2}, -1, 1));
  Var h = g.MatMul(x, w);
  Var l1 = g.Sum(g.Tanh(h));
  Var l2 = g.Mean(g.Square(h));
  auto g1 = g.Backpropagate(l1);
  auto g2 = g.Backpropagate(l2);
  auto g12 = g.Backpropagate(g.Add(l1, l2));
  for (Var v : {x, w}) {
    Tensor a = g12[v], b1 = g1[v], b2 = g2[v];
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i] == doctest::Approx(b1[i] + b2[i]).epsilon(1e-14));
    }
  }
}

TEST_CASE("every differentiable op passes the finite-difference check") {
  constexpr int kSeeds = 100;
  constexpr double kTol = 1e-4;
  using Build = std::function<Var(Graph&, std::mt19937_64&, std::vector<Var>&)>;
  auto leaf = [](Graph& g, std::vector<Var>& ls, Tensor t) {
    Var v = g.Input("p" + std::to_string(ls.size()), std::move(t));
    ls.push_back(v);
    return v;
  };
  std::vector<std::pair<const char*, Build>> cases = {
      {"matmul", [&](Graph& g, auto& rng, auto& ls) {
         return g.MatMul(leaf(g, ls, RandomTensor(rng, {2, 3, 4}, -1, 1)),
                         leaf(g, ls, RandomTensor(rng, {4, 5}, -1, 1)));
       }},
      {"matmul_t", [&](Graph& g, auto& rng, auto& ls) {
         return g.MatMul(leaf(g, ls, RandomTensor(rng, {3, 4}, -1, 1)),
                         leaf(g, ls, RandomTensor(rng, {5, 4}, -1, 1)), true);
       }},
      {"bmm", [&](Graph& g, auto& rng, auto& ls) {
         return g.MatMul(leaf(g, ls, RandomTensor(rng, {2, 3, 4}, -1, 1)),
                         leaf(g, ls, RandomTensor(rng, {2, 4, 3}, -1, 1)));
       }},
      {"bmm_t", [&](Graph& g, auto& rng, auto& ls) {
         return g.MatMul(leaf(g, ls, RandomTensor(rng, {2, 3, 4}, -1, 1)),
                         leaf(g, ls, RandomTensor(rng, {2, 5, 4}, -1, 1)), true);
       }},
      {"add_broadcast", [&](Graph& g, auto& rng, auto& ls) {
         return g.Add(leaf(g, ls, RandomTensor(rng, {3, 4}, -1, 1)),
                      leaf(g, ls, RandomTensor(rng, {4}, -1, 1)));
       }},
      {"sub_scalar", [&](Graph& g, auto& rng, auto& ls) {
         return g.Sub(leaf(g, ls, RandomTensor(rng, {3, 4}, -1, 1)),
                      leaf(g, ls, RandomTensor(rng, {1}, -1, 1)));
       }},
      {"mul", [&](Graph& g, auto& rng, auto& ls) {
         return g.Mul(leaf(g, ls, RandomTensor(rng, {2, 3}, -1, 1)),
                      leaf(g, ls, RandomTensor(rng, {2, 3}, -1, 1)));
       }},
      {"scale_shift", [&](Graph& g, auto& rng, auto& ls) {
         return g.Shift(g.Scale(leaf(g, ls, RandomTensor(rng, {5}, -1, 1)), -1.7), 0.2);
       }},
      {"tanh", [&](Graph& g, auto& rng, auto& ls) {
         return g.Tanh(leaf(g, ls, RandomTensor(rng, {6}, -2, 2)));
       }},
      {"gelu", [&](Graph& g, auto& rng, auto& ls) {
         return g.Gelu(leaf(g, ls, RandomTensor(rng, {6}, -3, 3)));
       }},
      {"exp", [&](Graph& g, auto& rng, auto& ls) {
         return g.Exp(leaf(g, ls, RandomTensor(rng, {6}, -2, 2)));
       }},
      {"log", [&](Graph& g, auto& rng, auto& ls) {
         return g.Log(leaf(g, ls, RandomTensor(rng, {6}, 0.1, 3)));
       }},
      {"reciprocal", [&](Graph& g, auto& rng, auto& ls) {
         return g.Reciprocal(leaf(g, ls, AwayFromZero(rng, {6}, 0.2, 3)));
       }},
      {"square", [&](Graph& g, auto& rng, auto& ls) {
         return g.Square(leaf(g, ls, RandomTensor(rng, {6}, -2, 2)));
       }},
      {"abs", [&](Graph& g, auto& rng, auto& ls) {
         return g.Abs(leaf(g, ls, AwayFromZero(rng, {6}, 0.01, 2)));
       }},
      {"clamp_min", [&](Graph& g, auto& rng, auto& ls) {
         return g.ClampMin(leaf(g, ls, AwayFromZero(rng, {6}, 0.01, 2)), 0.0);
       }},
      {"clip", [&](Graph& g, auto& rng, auto& ls) {
         Tensor t = RandomTensor(rng, {8}, 0.5, 1.5);
         for (auto& v : t.data()) {
           if (std::abs(v - 0.9) < 1e-3 || std::abs(v - 1.1) < 1e-3) v += 0.01;
         }
         return g.Clip(leaf(g, ls, t), 0.9, 1.1);
       }},
      {"minimum", [&](Graph& g, auto& rng, auto& ls) {
         Tensor a = RandomTensor(rng, {6}, -1, 1);
         Tensor b = RandomTensor(rng, {6}, -1, 1);
         for (std::size_t i = 0; i < a.size(); ++i) {
           if (std::abs(a[i] - b[i]) < 1e-3) b[i] += 0.01;
         }
         return g.Minimum(leaf(g, ls, a), leaf(g, ls, b));
       }},
      {"softmax", [&](Graph& g, auto& rng, auto& ls) {
         return g.Softmax(leaf(g, ls, RandomTensor(rng, {3, 5}, -2, 2)));
       }},
      {"softmax_causal", [&](Graph& g, auto& rng, auto& ls) {
         return g.Softmax(leaf(g, ls, RandomTensor(rng, {2, 4, 4}, -2, 2)), true);
       }},
      {"layer_norm", [&](Graph& g, auto& rng, auto& ls) {
         return g.LayerNorm(leaf(g, ls, RandomTensor(rng, {3, 6}, -2, 2)),
                            leaf(g, ls, RandomTensor(rng, {6}, 0.5, 1.5)),
                            leaf(g, ls, RandomTensor(rng, {6}, -1, 1)));
       }},
      {"index_select", [&](Graph& g, auto& rng, auto& ls) {
         return g.IndexSelect(leaf(g, ls, RandomTensor(rng, {2, 4, 3}, -1, 1)), 1,
                              {3, 0, 0, 2});
       }},
      {"concat", [&](Graph& g, auto& rng, auto& ls) {
         return g.Concat({leaf(g, ls, RandomTensor(rng, {2, 3}, -1, 1)),
                          leaf(g, ls, RandomTensor(rng, {2, 1}, -1, 1))},
                         1);
       }},
      {"reshape_permute", [&](Graph& g, auto& rng, auto& ls) {
         Var x = leaf(g, ls, RandomTensor(rng, {2, 3, 4}, -1, 1));
         return g.Permute(g.Reshape(x, {2, 3, 2, 2}), {0, 2, 1, 3});
       }},
      {"expand_last", [&](Graph& g, auto& rng, auto& ls) {
         return g.ExpandLast(leaf(g, ls, RandomTensor(rng, {2, 3}, -1, 1)), 4);
       }},
      {"mean_last_axis", [&](Graph& g, auto& rng, auto& ls) {
         return g.MeanLastAxis(leaf(g, ls, RandomTensor(rng, {3, 4}, -1, 1)));
       }},
      {"sum_mean", [&](Graph& g, auto& rng, auto& ls) {
         Var x = leaf(g, ls, RandomTensor(rng, {3, 4}, -1, 1));
         return g.Add(g.Sum(g.Square(x)), g.Mean(x));
       }},
      {"huber", [&](Graph& g, auto& rng, auto& ls) {
         Tensor t = RandomTensor(rng, {8}, -3, 3);
         for (auto& v : t.data()) {
           if (std::abs(std::abs(v) - 1.0) < 1e-3) v += 0.01;
         }
         return g.Huber(leaf(g, ls, t), 1.0);
       }},
  };
  for (const auto& [name, build] : cases) {
    CAPTURE(name);
    CHECK(CheckOp(build, kSeeds) < kTol);
  }
}
