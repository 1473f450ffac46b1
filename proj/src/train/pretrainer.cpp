#include "langtime/train/pretrainer.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "langtime/train/losses.hpp"
#include "langtime/util/format.hpp"

namespace langtime::train {

namespace {

constexpr std::uint64_t kBatchStream = 1;
constexpr std::uint64_t kMaskStream = 2;

std::mt19937_64 StreamRng(std::uint64_t seed, std::int64_t step, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

}  // namespace

BatchSampler::BatchSampler(std::vector<FramePtr> frames, std::int64_t target_length,
                           std::int64_t patch_size, std::int64_t stride)
    : frames_(std::move(frames)),
      target_length_(target_length),
      patch_size_(patch_size),
      stride_(stride) {
  if (frames_.empty()) throw std::invalid_argument("batch sampler needs at least one frame");
}

const data::WindowSet& BatchSampler::Windows(std::size_t frame, std::int64_t input_length) {
  auto key = std::make_pair(frame, input_length);
  auto it = cache_.find(key);
  if (it == cache_.end()) {
    it = cache_
             .emplace(key, data::WindowSet(frames_[frame], input_length, target_length_, stride_,
                                           patch_size_))
             .first;
  }
  return it->second;
}

std::vector<std::int64_t> SampleWithoutReplacement(std::int64_t n, std::int64_t k,
                                                   std::mt19937_64& rng) {
  if (k > n) {
    throw std::invalid_argument("cannot draw " + std::to_string(k) + " distinct windows from " +
                                std::to_string(n));
  }
  std::vector<std::int64_t> out;
  std::set<std::int64_t> seen;
  while (static_cast<std::int64_t>(out.size()) < k) {
    std::uniform_int_distribution<std::int64_t> pick(0, n - 1);
    const auto i = pick(rng);
    if (seen.insert(i).second) out.push_back(i);
  }
  return out;
}

data::WindowBatch BatchSampler::Sample(std::int64_t input_length, std::int64_t batch_size,
                                       std::uint64_t seed, std::int64_t step) {
  auto rng = StreamRng(seed, step, kBatchStream);
  std::uniform_int_distribution<std::size_t> pick_frame(0, frames_.size() - 1);
  const std::size_t frame = pick_frame(rng);
  const auto& windows = Windows(frame, input_length);
  return windows.Batch(SampleWithoutReplacement(windows.size(), batch_size, rng));
}

StepResult PretrainStep(model::Forecaster& model, AdamW& optimizer,
                        const data::WindowBatch& batch, const TrainConfig& config,
                        std::int64_t step) {
  StepResult r;
  r.step = step;
  r.schedule = Schedules(step, config);
  if (batch.input_length != r.schedule.length) {
    throw std::invalid_argument("batch input length " + std::to_string(batch.input_length) +
                                " does not match curriculum length " +
                                std::to_string(r.schedule.length) + " at step " +
                                std::to_string(step));
  }
  const auto& mc = model.config();
  if (batch.target_length != mc.output_length()) {
    throw std::invalid_argument("batch target length " + std::to_string(batch.target_length) +
                                " is not N*P=" + std::to_string(mc.output_length()));
  }
  const std::int64_t b = batch.size();
  ad::Graph g;
  model::BoundParams p(g, model.params(), /*differentiable=*/true);
  ad::Var x = g.Constant(ad::Tensor({b, batch.input_length}, batch.inputs));
  ad::Var y = g.Constant(ad::Tensor({b, batch.target_length}, batch.targets));
  auto mask_rng = StreamRng(config.seed, step, kMaskStream);
  model::ForwardOptions opts{config.mask_rate, &mask_rng};
  auto out = model::Forward(model, p, x, model.Layouts(batch.refs, batch.input_length), opts);
  auto loss = PretrainLoss(g, out.reconstruction, x, out.prediction, y, r.schedule.alpha,
                           config.huber_delta);
  r.loss = g.value(loss.total).item();
  r.loss_rec = g.value(loss.reconstruction).item();
  r.loss_pred = g.value(loss.prediction).item();
  optimizer.Step(model.params(), p, g.Backpropagate(loss.total), r.schedule.lr);
  return r;
}

std::string TrainLogHeader() { return "step,lr,alpha,L,loss_total,loss_rec,loss_pred"; }

std::string TrainLogLine(const StepResult& r) {
  using util::FormatDouble;
  return util::CsvLine({std::to_string(r.step), FormatDouble(r.schedule.lr),
                        FormatDouble(r.schedule.alpha), std::to_string(r.schedule.length),
                        FormatDouble(r.loss), FormatDouble(r.loss_rec), FormatDouble(r.loss_pred)});
}

Pretrainer::Pretrainer(model::Forecaster& model, TrainConfig config, BatchSampler sampler)
    : model_(&model),
      config_(std::move(config)),
      sampler_(std::move(sampler)),
      optimizer_(config_.adamw) {
  config_.Validate(model.config().patch_size);
  for (auto len : config_.lengths) {
    if (!model.config().Supports(len)) {
      throw std::invalid_argument("curriculum length " + std::to_string(len) +
                                  " has no model head; supported " +
                                  model.config().LengthsString());
    }
  }
}

StepResult Pretrainer::Step() {
  const auto sched = Schedules(step_, config_);
  auto batch = sampler_.Sample(sched.length, config_.batch_size, config_.seed, step_);
  auto r = PretrainStep(*model_, optimizer_, batch, config_, step_);
  ++step_;
  return r;
}

void Pretrainer::Run(std::ostream* log) {
  if (log && step_ == 0) *log << TrainLogHeader() << '\n';
  while (step_ < config_.total_steps) {
    auto r = Step();
    if (log) *log << TrainLogLine(r) << '\n';
  }
}

double ValidationMse(const model::Forecaster& model, const std::vector<FramePtr>& frames,
                     std::int64_t input_length, std::int64_t stride) {
  constexpr std::int64_t kChunk = 64;
  const auto& c = model.config();
  double sum = 0.0;
  std::int64_t count = 0;
  for (const auto& frame : frames) {
    data::WindowSet windows(frame, input_length, c.output_length(), stride, c.patch_size);
    for (std::int64_t begin = 0; begin < windows.size(); begin += kChunk) {
      std::vector<std::int64_t> idx;
      for (std::int64_t i = begin; i < std::min(windows.size(), begin + kChunk); ++i) {
        idx.push_back(i);
      }
      auto batch = windows.Batch(idx);
      auto pred = model::Predict(
          model, ad::Tensor({batch.size(), input_length}, batch.inputs),
          model.Layouts(batch.refs, input_length));
      for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred[i] - batch.targets[i];
        sum += e * e;
      }
      count += static_cast<std::int64_t>(pred.size());
    }
  }
  if (count == 0) throw std::invalid_argument("no validation windows");
  return sum / static_cast<double>(count);
}

}  // namespace langtime::train
