#include "langtime/ppo/finetune.hpp"

#include <algorithm>

#include "langtime/util/format.hpp"

namespace langtime::ppo {

std::vector<double> Trajectories::Row(const ad::Tensor& t, std::int64_t b) const {
  const auto k = t.dim(1);
  return {t.data().begin() + b * k, t.data().begin() + (b + 1) * k};
}

namespace {

std::int64_t StepCount(const model::Forecaster& f, const data::WindowBatch& initial) {
  const auto k = f.config().output_length();
  if (initial.target_length <= 0 || initial.target_length % k != 0) {
    throw PpoError("fine-tune horizon " + std::to_string(initial.target_length) +
                   " is not a positive multiple of the output length " + std::to_string(k));
  }
  return initial.target_length / k;
}

ad::Tensor TruthAt(const data::WindowBatch& initial, std::int64_t t, std::int64_t k) {
  const auto b = initial.size();
  std::vector<double> out(static_cast<std::size_t>(b * k));
  for (std::int64_t i = 0; i < b; ++i) {
    auto row = initial.target(i);
    std::copy(row.begin() + t * k, row.begin() + (t + 1) * k, out.begin() + i * k);
  }
  return ad::Tensor({b, k}, std::move(out));
}

}  // namespace

Trajectories CollectTrajectories(const model::Forecaster& policy,
                                 const model::Forecaster& reference,
                                 const data::WindowBatch& initial, const PpoConfig& ppo,
                                 const RewardConfig& reward) {
  if (reference.config().output_length() != policy.config().output_length() ||
      !(reference.vocab() == policy.vocab())) {
    throw PpoError("reference and policy must share output length and vocabulary");
  }
  const auto m = StepCount(policy, initial);
  const auto k = policy.config().output_length();
  Trajectories tr;
  tr.origins = initial.refs;
  auto state = model::StartRollout(policy, initial);
  for (std::int64_t t = 0; t < m; ++t) {
    auto in = model::CurrentInput(policy, state);
    auto y_pol = model::Predict(policy, in.windows, in.layouts);
    tr.reference.push_back(model::Predict(reference, in.windows, in.layouts));
    tr.truth.push_back(TruthAt(initial, t, k));
    model::Advance(state, in, y_pol);
    tr.policy.push_back(std::move(y_pol));
    tr.states.push_back(std::move(in));
  }

  const auto b_len = tr.batch();
  tr.rewards.resize(b_len);
  tr.values.resize(b_len);
  tr.advantages.resize(b_len);
  for (std::int64_t b = 0; b < b_len; ++b) {
    std::vector<std::vector<double>> preds, truths;
    std::vector<double> totals;
    for (std::int64_t t = 0; t < m; ++t) {
      preds.push_back(tr.Row(tr.policy[t], b));
      truths.push_back(tr.Row(tr.truth[t], b));
      auto r = Reward(preds.back(), truths.back(), tr.Row(tr.reference[t], b), reward);
      totals.push_back(r.total);
      tr.rewards[b].push_back(r);
    }
    for (std::int64_t t = 0; t <= m; ++t) {
      tr.values[b].push_back(ValueEstimate(preds, truths, t, reward));
    }
    tr.advantages[b] = GaeAdvantages(totals, tr.values[b], ppo.gamma, ppo.lambda, ppo.xi);
  }
  return tr;
}

ObjectiveVars TimePpoObjective(ad::Graph& g, const model::Forecaster& policy,
                               const model::BoundParams& p, const Trajectories& traj,
                               const PpoConfig& ppo, double huber_delta) {
  const auto m = traj.steps();
  const auto b_len = traj.batch();
  if (m == 0 || b_len == 0) throw PpoError("no trajectories to update on");
  ObjectiveVars o;
  // Step-major, matching the order of the ratios.
  for (std::int64_t t = 0; t < m; ++t) {
    for (std::int64_t b = 0; b < b_len; ++b) o.advantages.push_back(traj.advantages[b][t]);
  }
  if (ppo.normalize_advantages) o.advantages = NormalizeAdvantages(o.advantages);
  std::vector<ad::Var> surrogates, ratios;
  for (std::int64_t t = 0; t < m; ++t) {
    const auto& in = traj.states[t];
    auto out = model::Forward(policy, p, g.Constant(in.windows), in.layouts);
    std::vector<Moments> old;
    for (std::int64_t b = 0; b < b_len; ++b) {
      old.push_back(SequenceMoments(traj.Row(traj.policy[t], b), ppo.sigma_floor));
    }
    std::vector<double> adv(o.advantages.begin() + t * b_len, o.advantages.begin() + (t + 1) * b_len);
    ad::Var ratio = PolicyRatio(g, out.prediction, old, ppo.sigma_floor);
    ratios.push_back(ratio);
    surrogates.push_back(ClippedSurrogate(g, ratio, adv, ppo.clip_eps));
    ad::Var l = g.Mean(g.Huber(g.Sub(out.prediction, g.Constant(traj.truth[t])), huber_delta));
    o.prediction_loss = o.prediction_loss.valid() ? g.Add(o.prediction_loss, l) : l;
  }
  o.prediction_loss = g.Scale(o.prediction_loss, 1.0 / static_cast<double>(m));
  o.surrogate = g.Mean(g.Concat(surrogates, 0));
  o.objective = g.Sub(o.surrogate, g.Scale(o.prediction_loss, ppo.eta));
  o.ratios = g.Concat(ratios, 0);
  return o;
}

UpdateMetrics TimePpoUpdate(model::Forecaster& policy, train::AdamW& optimizer,
                            const Trajectories& traj, const PpoConfig& ppo, double huber_delta,
                            double lr) {
  ad::Graph g;
  model::BoundParams p(g, policy.params(), /*differentiable=*/true);
  auto o = TimePpoObjective(g, policy, p, traj, ppo, huber_delta);
  UpdateMetrics u;
  u.objective = g.value(o.objective).item();
  u.surrogate = g.value(o.surrogate).item();
  u.prediction_loss = g.value(o.prediction_loss).item();
  const auto r_all = g.value(o.ratios).data();
  u.clip_fraction = ClippedSurrogate(r_all, o.advantages, ppo.clip_eps).clip_fraction;
  for (double r : r_all) u.mean_ratio += r;
  u.mean_ratio /= static_cast<double>(r_all.size());
  optimizer.Step(policy.params(), p, g.Backpropagate(g.Scale(o.objective, -1.0)), lr);
  return u;
}

Trajectories TeacherForcedStates(const model::Forecaster& model, const data::WindowBatch& initial) {
  const auto m = StepCount(model, initial);
  const auto k = model.config().output_length();
  Trajectories tr;
  tr.origins = initial.refs;
  auto state = model::StartRollout(model, initial);
  for (std::int64_t t = 0; t < m; ++t) {
    auto in = model::CurrentInput(model, state);
    tr.truth.push_back(TruthAt(initial, t, k));
    model::Advance(state, in, tr.truth.back());
    tr.states.push_back(std::move(in));
  }
  return tr;
}

double SftUpdate(model::Forecaster& model, train::AdamW& optimizer, const Trajectories& states,
                 double huber_delta, double lr) {
  const auto m = states.steps();
  if (m == 0) throw PpoError("no states to update on");
  ad::Graph g;
  model::BoundParams p(g, model.params(), /*differentiable=*/true);
  ad::Var loss;
  for (std::int64_t t = 0; t < m; ++t) {
    const auto& in = states.states[t];
    auto out = model::Forward(model, p, g.Constant(in.windows), in.layouts);
    ad::Var l = g.Mean(g.Huber(g.Sub(out.prediction, g.Constant(states.truth[t])), huber_delta));
    loss = loss.valid() ? g.Add(loss, l) : l;
  }
  loss = g.Scale(loss, 1.0 / static_cast<double>(m));
  const double value = g.value(loss).item();
  optimizer.Step(model.params(), p, g.Backpropagate(loss), lr);
  return value;
}

Algorithm ParseAlgorithm(const std::string& name) {
  if (name == "timeppo") return Algorithm::kTimePpo;
  if (name == "sft") return Algorithm::kSft;
  throw PpoError("unknown fine-tuning algorithm '" + name + "' (expected timeppo or sft)");
}

std::string AlgorithmName(Algorithm a) { return a == Algorithm::kTimePpo ? "timeppo" : "sft"; }

void FinetuneConfig::Validate(const model::ModelConfig& model) const {
  if (epochs < 1) throw PpoError("fine-tune epochs must be positive");
  if (batch_size < 1) throw PpoError("fine-tune batch size must be positive");
  if (stride < 1) throw PpoError("fine-tune stride must be positive");
  if (!model.Supports(input_length)) {
    throw PpoError("fine-tune input length " + std::to_string(input_length) +
                   " has no model head; supported " + model.LengthsString());
  }
  if (horizon <= 0 || horizon % model.output_length() != 0) {
    throw PpoError("fine-tune horizon " + std::to_string(horizon) +
                   " is not a positive multiple of the output length " +
                   std::to_string(model.output_length()));
  }
  if (!(lr >= 0.0)) throw PpoError("fine-tune learning rate must be non-negative");
  if (!(huber_delta > 0.0)) throw PpoError("huber delta must be positive");
  ppo.Validate();
  reward.Validate();
}

FineTuner::FineTuner(model::Forecaster& policy, FinetuneConfig config,
                     std::vector<train::FramePtr> frames)
    : policy_(&policy),
      reference_(policy),
      config_(std::move(config)),
      sampler_(std::move(frames), config_.horizon, policy.config().patch_size, config_.stride),
      optimizer_(config_.adamw) {
  config_.Validate(policy.config());
}

EpochMetrics FineTuner::Epoch() {
  EpochMetrics em;
  em.epoch = epoch_;
  auto batch = sampler_.Sample(config_.input_length, config_.batch_size, config_.seed, epoch_);
  for (std::int64_t b = 0; b < batch.size(); ++b) {
    const auto& r = batch.refs[b];
    if (b) em.windows += ';';
    em.windows += r.dataset_id + "/" + r.channel_id + "@" + std::to_string(r.start);
  }

  auto traj = CollectTrajectories(*policy_, reference_, batch, config_.ppo, config_.reward);
  const auto m = traj.steps();
  double n = 0.0;
  for (const auto& row : traj.rewards) {
    for (const auto& r : row) {
      em.reward += r.total;
      em.reward_core += r.core;
      em.reward_penalty += r.penalty;
      n += 1.0;
    }
  }
  em.reward /= n;
  em.reward_core /= n;
  em.reward_penalty /= n;
  for (std::int64_t b = 0; b < traj.batch(); ++b) {
    const auto d = ComputeRewardDimensions(traj.Row(traj.policy[m - 1], b),
                                           traj.Row(traj.truth[m - 1], b), config_.reward.eps_num,
                                           config_.reward.sigma_floor);
    em.last_step_mse += d.mse / static_cast<double>(traj.batch());
    em.last_step_mae += d.mae / static_cast<double>(traj.batch());
  }

  const auto k_inner = config_.ppo.inner_epochs;
  if (config_.algorithm == Algorithm::kTimePpo) {
    UpdateMetrics avg;
    for (std::int64_t k = 0; k < k_inner; ++k) {
      auto u = TimePpoUpdate(*policy_, optimizer_, traj, config_.ppo, config_.huber_delta,
                             config_.lr);
      avg.objective += u.objective / k_inner;
      avg.surrogate += u.surrogate / k_inner;
      avg.mean_ratio += u.mean_ratio / k_inner;
      avg.clip_fraction += u.clip_fraction / k_inner;
      avg.prediction_loss += u.prediction_loss / k_inner;
    }
    em.loss = -avg.objective;
    em.ppo = avg;
  } else {
    auto states = TeacherForcedStates(*policy_, batch);
    for (std::int64_t k = 0; k < k_inner; ++k) {
      em.loss += SftUpdate(*policy_, optimizer_, states, config_.huber_delta, config_.lr) / k_inner;
    }
  }
  ++epoch_;
  return em;
}

void FineTuner::Run(std::ostream* log) {
  if (log && epoch_ == 0) *log << FinetuneLogHeader() << '\n';
  while (epoch_ < config_.epochs) {
    auto m = Epoch();
    if (log) *log << FinetuneLogLine(m) << '\n';
  }
}

std::string FinetuneLogHeader() {
  return "epoch,loss,reward,reward_core,reward_penalty,last_step_mse,last_step_mae,mean_ratio,clip_fraction,"
         "pred_loss,windows";
}

std::string FinetuneLogLine(const EpochMetrics& m) {
  using util::FormatDouble;
  std::vector<std::string> cells = {std::to_string(m.epoch), FormatDouble(m.loss),
                                    FormatDouble(m.reward), FormatDouble(m.reward_core),
                                    FormatDouble(m.reward_penalty), FormatDouble(m.last_step_mse),
                                    FormatDouble(m.last_step_mae)};
  if (m.ppo) {
    cells.push_back(FormatDouble(m.ppo->mean_ratio));
    cells.push_back(FormatDouble(m.ppo->clip_fraction));
    cells.push_back(FormatDouble(m.ppo->prediction_loss));
  } else {
    cells.insert(cells.end(), 3, "");
  }
  cells.push_back(m.windows);
  return util::CsvLine(cells);
}

}  // namespace langtime::ppo
