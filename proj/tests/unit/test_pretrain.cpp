#include <cmath>
#include <random>

#include "doctest.h"
#include "langtime/autodiff/gradcheck.hpp"
#include "langtime/data/synthetic.hpp"
#include "langtime/train/losses.hpp"
#include "langtime/train/pretrainer.hpp"

using namespace langtime;
using namespace langtime::train;
using ad::Tensor;

namespace {

model::ModelConfig Tiny() {
  model::ModelConfig c;
  c.d_te = 8;
  c.d_bb = 8;
  c.n_te = 1;
  c.n_bb = 1;
  c.ffn_mult = 2;
  c.lengths = {16, 32};
  return c;
}

std::vector<FramePtr> Corpus() {
  data::SyntheticSpec s;
  s.length = 400;
  s.channels = 2;
  auto f = std::make_shared<const data::SeriesFrame>(data::GenerateSynthetic(s));
  return {f};
}

prompt::PromptVocabulary Vocab() {
  return prompt::PromptVocabulary({"synthetic"}, {"synthetic/ch0", "synthetic/ch1"});
}

TrainConfig TinyTrain(std::int64_t steps) {
  TrainConfig t;
  t.total_steps = steps;
  t.batch_size = 4;
  t.lengths = {16, 32};
  t.lr = 1e-3;
  t.seed = 3;
  return t;
}

}  // namespace

TEST_CASE("huber loss") {
  const double half[] = {0.5};
  const double two[] = {2.0};
  CHECK(HuberLoss(half, 1.0) == 0.125);
  CHECK(HuberLoss(two, 1.0) == 1.5);
  for (double delta : {0.25, 1.0, 3.0}) {
    const double at[] = {delta};
    CHECK(HuberLoss(at, delta) == 0.5 * delta * delta);
    CHECK(delta * (delta - 0.5 * delta) == 0.5 * delta * delta);
  }
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> r(16);
    for (auto& v : r) v = u(rng);
    for (double v : r) {
      const double one[] = {v};
      CHECK(HuberLoss(one, 1.0) <= 0.5 * v * v);
    }
    std::vector<double> small(16);
    double mse = 0;
    for (std::size_t i = 0; i < small.size(); ++i) {
      small[i] = r[i] / 3.0;
      mse += small[i] * small[i];
    }
    mse /= 16.0;
    CHECK(HuberLoss(small, 1.0) == doctest::Approx(0.5 * mse).epsilon(1e-15));
  }
  CHECK_THROWS(HuberLoss(half, 0.0));

  ad::Graph g;
  auto v = g.Constant(Tensor::Vector({0.5, 2.0, -2.0, -0.5}));
  CHECK(g.value(HuberLoss(g, v, 1.0)).item() == (0.125 + 1.5 + 1.5 + 0.125) / 4.0);
}

TEST_CASE("pretrain loss") {
  ad::Graph g;
  // Residual 0.6 -> huber 0.18; residual 0.8 -> 0.32 (quadratic branch).
  auto xh = g.Constant(Tensor::Vector({0.6}));
  auto x = g.Constant(Tensor::Vector({0.0}));
  auto yh = g.Constant(Tensor::Vector({0.8}));
  auto y = g.Constant(Tensor::Vector({0.0}));
  auto a = g.value(PretrainLoss(g, xh, x, yh, y, 0.0, 1.0).total).item();
  auto b = g.value(PretrainLoss(g, xh, x, yh, y, 1.0, 1.0).total).item();
  CHECK(a == doctest::Approx(0.32).epsilon(1e-15));
  CHECK(b == doctest::Approx(0.18).epsilon(1e-15));
  for (double alpha : {0.25, 0.5, 0.7}) {
    auto l = g.value(PretrainLoss(g, xh, x, yh, y, alpha, 1.0).total).item();
    CHECK(l == alpha * b + (1.0 - alpha) * a);
  }

  ad::Graph h;
  auto rec = h.Constant(Tensor::Vector({std::sqrt(0.4)}));
  auto pred = h.Constant(Tensor::Vector({std::sqrt(0.8)}));
  auto zero = h.Constant(Tensor::Vector({0.0}));
  CHECK(h.value(PretrainLoss(h, rec, zero, pred, zero, 0.5, 1.0).total).item() ==
        doctest::Approx(0.3).epsilon(1e-14));

  auto two = g.Constant(Tensor::Vector({0.0, 0.0}));
  CHECK_THROWS(PretrainLoss(g, xh, two, yh, y, 0.5, 1.0));
  CHECK_THROWS(PretrainLoss(g, xh, x, yh, y, 1.5, 1.0));
}

TEST_CASE("schedules") {
  TrainConfig t;
  t.total_steps = 1000;
  t.lengths = {96, 288, 480, 672};
  t.lr = 1e-4;
  auto s0 = Schedules(0, t);
  CHECK(s0.lr == 0.0);
  CHECK(s0.alpha == 0.7);
  CHECK(s0.length == 96);
  auto last = Schedules(999, t);
  CHECK(std::abs(last.lr) < 1e-6);
  CHECK(last.alpha == 0.5);
  CHECK(last.length == 672);
  CHECK(t.WarmupSteps() == 50);
  CHECK(Schedules(50, t).lr == 1e-4);
  double best = -1;
  std::int64_t arg = -1;
  for (std::int64_t s = 0; s < 1000; ++s) {
    auto lr = Schedules(s, t).lr;
    if (lr > best) {
      best = lr;
      arg = s;
    }
  }
  CHECK(arg == 50);
  CHECK(Schedules(49, t).alpha == 0.7);
  CHECK(Schedules(50, t).alpha == 0.5);

  for (std::int64_t total : {4, 7, 10, 999, 1000, 2001}) {
    t.total_steps = total;
    std::int64_t phase = 0;
    std::vector<std::int64_t> per_phase(4, 0);
    for (std::int64_t s = 0; s < total; ++s) {
      auto sc = Schedules(s, t);
      CHECK(sc.phase >= phase);
      CHECK(sc.phase <= phase + 1);
      phase = sc.phase;
      ++per_phase[sc.phase];
      CHECK(sc.length == t.lengths[sc.phase]);
    }
    CHECK(phase == 3);
    const auto lo = *std::min_element(per_phase.begin(), per_phase.end());
    const auto hi = *std::max_element(per_phase.begin(), per_phase.end());
    CHECK(hi - lo <= 1);
  }
  CHECK_THROWS(Schedules(-1, t));
  CHECK_THROWS(Schedules(t.total_steps, t));

  t.lengths = {96, 290};
  CHECK_THROWS(t.Validate(24));
  t.lengths = {96, 288};
  t.Validate(24);
}

TEST_CASE("adamw update against a hand-computed step") {
  model::ParamStore s;
  s.Add("w", Tensor::Vector({1.0, -2.0}));
  s.Add("unused", Tensor::Vector({5.0}));
  ad::Graph g;
  model::BoundParams p(g, s, true);
  auto loss = g.Sum(g.Square(p("w")));  // grad = 2w = [2, -4]
  auto grads = g.Backpropagate(loss);
  AdamW opt;
  opt.Step(s, p, grads, 0.1);
  // Step 1: m_hat = g, v_hat = g^2, update = g / (|g| + eps).
  const double eps = 1e-8;
  CHECK(s.at("w")[0] == 1.0 - 0.1 * (2.0 / (2.0 + eps) + 0.01 * 1.0));
  CHECK(s.at("w")[1] == -2.0 - 0.1 * (-4.0 / (4.0 + eps) + 0.01 * -2.0));
  CHECK(s.at("unused")[0] == 5.0);
  CHECK(opt.state().count("unused") == 0);

  auto before = s.at("w");
  opt.Step(s, p, grads, 0.0);
  CHECK(s.at("w") == before);
  CHECK(opt.state().at("w").t == 2);
}

TEST_CASE("pretrain steps are deterministic and honour the curriculum") {
  auto run = [](std::int64_t steps, double lr) {
    model::Forecaster m(Tiny(), Vocab(), 1);
    auto cfg = TinyTrain(steps);
    cfg.lr = lr;
    Pretrainer t(m, cfg, BatchSampler(Corpus(), 16, 8));
    std::vector<double> losses;
    while (t.step() < steps) losses.push_back(t.Step().loss);
    return std::make_pair(losses, m.params());
  };
  auto a = run(100, 1e-3);
  auto b = run(100, 1e-3);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  auto frozen = run(5, 0.0);
  CHECK(frozen.second == model::Forecaster(Tiny(), Vocab(), 1).params());

  model::Forecaster m(Tiny(), Vocab(), 1);
  AdamW opt;
  BatchSampler sampler(Corpus(), 16, 8);
  auto wrong = sampler.Sample(32, 4, 3, 0);
  CHECK_THROWS_WITH(PretrainStep(m, opt, wrong, TinyTrain(10), 0),
                    doctest::Contains("curriculum length 16"));
  auto right = sampler.Sample(16, 4, 3, 0);
  CHECK(right.refs == sampler.Sample(16, 4, 3, 0).refs);
  CHECK(TrainLogLine(PretrainStep(m, opt, right, TinyTrain(10), 0)).rfind("0,0,0.7,16,", 0) == 0);
}

TEST_CASE("composed pretrain loss passes the finite-difference check") {
  model::Forecaster m(Tiny(), Vocab(), 5);
  BatchSampler sampler(Corpus(), 16, 8);
  auto batch = sampler.Sample(16, 2, 1, 0);
  ad::Graph g;
  model::BoundParams p(g, m.params(), true);
  auto x = g.Constant(Tensor({2, 16}, batch.inputs));
  auto y = g.Constant(Tensor({2, 16}, batch.targets));
  std::mt19937_64 rng(2);
  auto out = model::Forward(m, p, x, m.Layouts(batch.refs, 16), {0.5, &rng});
  auto loss = PretrainLoss(g, out.reconstruction, x, out.prediction, y, 0.7, 1.0);
  auto res = ad::FiniteDifferenceCheck(g, loss.total, g.Leaves(), 1e-5);
  CHECK(res.max_relative_error < 1e-4);
}

TEST_CASE("a short single-length run lowers validation error") {
  model::Forecaster m(Tiny(), Vocab(), 1);
  auto frames = Corpus();
  const double before = ValidationMse(m, frames, 16, 4);
  auto cfg = TinyTrain(150);
  cfg.lengths = {16};
  cfg.batch_size = 8;
  Pretrainer t(m, cfg, BatchSampler(frames, 16, 8));
  t.Run(nullptr);
  CHECK(ValidationMse(m, frames, 16, 4) < before);
}

TEST_CASE("validation mse") {
  model::Forecaster m(Tiny(), Vocab(), 1);
  auto frames = Corpus();
  const double mse = ValidationMse(m, frames, 16, 4);
  CHECK(std::isfinite(mse));
  CHECK(mse > 0.0);
  CHECK(ValidationMse(m, frames, 16, 4) == mse);
}
