#ifndef LANGTIME_TRAIN_SCHEDULE_HPP_
#define LANGTIME_TRAIN_SCHEDULE_HPP_

#include <cstdint>
#include <vector>

namespace langtime::train {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct TrainConfig {
  double alpha_warmup = 0.7;
  double alpha_decay = 0.5;
  double huber_delta = 1.0;
  double mask_rate = 0.4;
  double lr = 1e-4;
  double warmup_fraction = 0.05;
  std::int64_t total_steps = 2000;
  std::int64_t batch_size = 16;
  // Input length per curriculum phase, shortest first.
  std::vector<std::int64_t> lengths = {16, 32, 48, 64};
  // First step of each phase; empty means equal-length phases.
  std::vector<std::int64_t> phase_starts;
  // Phased: every step of phase k uses lengths[k]. Cumulative: each step of
  // phase k draws one of lengths[0..k] uniformly (seeded by seed and step).
  enum class Curriculum { kPhased, kCumulative };
  Curriculum curriculum = Curriculum::kPhased;
  AdamWConfig adamw;
  std::uint64_t seed = 0;

  std::int64_t WarmupSteps() const;
  // Resolved phase starts: starts[0] == 0, strictly increasing, < total_steps.
  std::vector<std::int64_t> PhaseStarts() const;
  void Validate(std::int64_t patch_size) const;
};

struct Schedule {
  double lr = 0.0;
  double alpha = 0.0;
  std::int64_t length = 0;
  std::int64_t phase = 0;
};

// Linear warmup from 0 to the peak over WarmupSteps(), then cosine decay
// reaching 0 at the last step. Alpha switches from its warmup value to its
// decay value when the warmup ends.
Schedule Schedules(std::int64_t step, const TrainConfig& config);

}  // namespace langtime::train

#endif  // LANGTIME_TRAIN_SCHEDULE_HPP_
