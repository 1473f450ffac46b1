#ifndef LANGTIME_TRAIN_PRETRAINER_HPP_
#define LANGTIME_TRAIN_PRETRAINER_HPP_

#include <cstdint>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "langtime/data/windows.hpp"
#include "langtime/model/forecaster.hpp"
#include "langtime/train/adamw.hpp"
#include "langtime/train/schedule.hpp"

namespace langtime::train {

using FramePtr = std::shared_ptr<const data::SeriesFrame>;

// Draws single-bucket batches: one dataset, one input length. Which dataset
// and which windows depend only on (seed, step, length).
class BatchSampler {
 public:
  BatchSampler(std::vector<FramePtr> frames, std::int64_t target_length, std::int64_t patch_size,
               std::int64_t stride = 1);

  data::WindowBatch Sample(std::int64_t input_length, std::int64_t batch_size,
                           std::uint64_t seed, std::int64_t step);
  const std::vector<FramePtr>& frames() const { return frames_; }

 private:
  const data::WindowSet& Windows(std::size_t frame, std::int64_t input_length);

  std::vector<FramePtr> frames_;
  std::int64_t target_length_;
  std::int64_t patch_size_;
  std::int64_t stride_;
  std::map<std::pair<std::size_t, std::int64_t>, data::WindowSet> cache_;
};

// Distinct uniform draws from [0, n), in draw order.
std::vector<std::int64_t> SampleWithoutReplacement(std::int64_t n, std::int64_t k,
                                                   std::mt19937_64& rng);

struct StepResult {
  std::int64_t step = 0;
  Schedule schedule;
  double loss = 0.0;
  double loss_rec = 0.0;
  double loss_pred = 0.0;
};

// One optimizer update on the joint loss. The batch input length must be the
// curriculum length scheduled for `step`.
StepResult PretrainStep(model::Forecaster& model, AdamW& optimizer,
                        const data::WindowBatch& batch, const TrainConfig& config,
                        std::int64_t step);

std::string TrainLogHeader();
std::string TrainLogLine(const StepResult& r);

class Pretrainer {
 public:
  Pretrainer(model::Forecaster& model, TrainConfig config, BatchSampler sampler);

  StepResult Step();
  // Runs the remaining steps, writing one log line per step when `log` is set.
  void Run(std::ostream* log);
  std::int64_t step() const { return step_; }
  const TrainConfig& config() const { return config_; }

 private:
  model::Forecaster* model_;
  TrainConfig config_;
  BatchSampler sampler_;
  AdamW optimizer_;
  std::int64_t step_ = 0;
};

// Mean squared error of single-shot predictions over every window (with the
// given stride) of the frames.
double ValidationMse(const model::Forecaster& model, const std::vector<FramePtr>& frames,
                     std::int64_t input_length, std::int64_t stride);

}  // namespace langtime::train

#endif  // LANGTIME_TRAIN_PRETRAINER_HPP_
