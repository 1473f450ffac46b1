#ifndef LANGTIME_PPO_FINETUNE_HPP_
#define LANGTIME_PPO_FINETUNE_HPP_

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "langtime/model/forecaster.hpp"
#include "langtime/ppo/objective.hpp"
#include "langtime/train/adamw.hpp"
#include "langtime/train/pretrainer.hpp"

namespace langtime::ppo {

// Batched rollouts. Index [t] is the step, rows inside are trajectories; the
// per-trajectory vectors are indexed [b][t].
struct Trajectories {
  std::vector<data::WindowRef> origins;
  std::vector<model::StepInput> states;
  std::vector<ad::Tensor> policy;     // [B, K] per step
  std::vector<ad::Tensor> reference;  // [B, K] per step, same states
  std::vector<ad::Tensor> truth;      // [B, K] per step
  std::vector<std::vector<RewardBreakdown>> rewards;
  std::vector<std::vector<double>> values;  // m + 1 entries, terminal last
  std::vector<std::vector<double>> advantages;

  std::int64_t batch() const { return static_cast<std::int64_t>(origins.size()); }
  std::int64_t steps() const { return static_cast<std::int64_t>(states.size()); }
  std::vector<double> Row(const ad::Tensor& t, std::int64_t b) const;
};

// Rolls the policy out over initial.target_length points (a whole number of
// steps). The reference predicts from the policy's states; rewards, values and
// advantages are filled in.
Trajectories CollectTrajectories(const model::Forecaster& policy,
                                 const model::Forecaster& reference,
                                 const data::WindowBatch& initial, const PpoConfig& ppo,
                                 const RewardConfig& reward);

struct UpdateMetrics {
  double objective = 0.0;
  double surrogate = 0.0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  double prediction_loss = 0.0;
};

struct ObjectiveVars {
  ad::Var objective;
  ad::Var surrogate;
  ad::Var prediction_loss;
  ad::Var ratios;  // every (step, trajectory) ratio, step-major
  std::vector<double> advantages;  // as used, same order as ratios
};

// Builds the objective to maximize over every collected state, with `p` bound
// to the policy's parameters.
ObjectiveVars TimePpoObjective(ad::Graph& g, const model::Forecaster& policy,
                               const model::BoundParams& p, const Trajectories& traj,
                               const PpoConfig& ppo, double huber_delta);

// One gradient ascent step on the clipped objective minus eta times the Huber
// prediction loss, over every collected state.
UpdateMetrics TimePpoUpdate(model::Forecaster& policy, train::AdamW& optimizer,
                            const Trajectories& traj, const PpoConfig& ppo, double huber_delta,
                            double lr);

// Ground-truth contexts for the same steps a rollout would take.
Trajectories TeacherForcedStates(const model::Forecaster& model, const data::WindowBatch& initial);

// One step on the mean Huber prediction loss over teacher-forced states.
double SftUpdate(model::Forecaster& model, train::AdamW& optimizer, const Trajectories& states,
                 double huber_delta, double lr);

enum class Algorithm { kTimePpo, kSft };
Algorithm ParseAlgorithm(const std::string& name);
std::string AlgorithmName(Algorithm a);

struct FinetuneConfig {
  Algorithm algorithm = Algorithm::kTimePpo;
  std::int64_t epochs = 20;
  std::int64_t batch_size = 16;
  std::int64_t input_length = 16;
  std::int64_t horizon = 64;
  std::int64_t stride = 1;
  double lr = 1e-6;
  double huber_delta = 1.0;
  std::uint64_t seed = 0;
  PpoConfig ppo;
  RewardConfig reward;
  train::AdamWConfig adamw;

  void Validate(const model::ModelConfig& model) const;
};

struct EpochMetrics {
  std::int64_t epoch = 0;
  std::string windows;  // dataset:start/channel of every window, for audit
  double loss = 0.0;
  // Rollout metrics on the epoch's batch before the update.
  double reward = 0.0;
  double reward_core = 0.0;
  double reward_penalty = 0.0;
  double last_step_mse = 0.0;
  double last_step_mae = 0.0;
  // TimePPO only, averaged over inner epochs.
  std::optional<UpdateMetrics> ppo;
};

// The policy is updated in place; the reference is a frozen copy taken at
// construction. Both algorithms draw identical window batches for a seed.
class FineTuner {
 public:
  FineTuner(model::Forecaster& policy, FinetuneConfig config, std::vector<train::FramePtr> frames);

  EpochMetrics Epoch();
  void Run(std::ostream* log);

  std::int64_t epoch() const { return epoch_; }
  const model::Forecaster& reference() const { return reference_; }
  const FinetuneConfig& config() const { return config_; }

 private:
  model::Forecaster* policy_;
  model::Forecaster reference_;
  FinetuneConfig config_;
  train::BatchSampler sampler_;
  train::AdamW optimizer_;
  std::int64_t epoch_ = 0;
};

std::string FinetuneLogHeader();
std::string FinetuneLogLine(const EpochMetrics& m);

}  // namespace langtime::ppo

#endif  // LANGTIME_PPO_FINETUNE_HPP_
