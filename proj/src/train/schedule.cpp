#include "langtime/train/schedule.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace langtime::train {

std::int64_t TrainConfig::WarmupSteps() const {
  return std::llround(warmup_fraction * static_cast<double>(total_steps));
}

std::vector<std::int64_t> TrainConfig::PhaseStarts() const {
  if (!phase_starts.empty()) return phase_starts;
  const auto k = static_cast<std::int64_t>(lengths.size());
  std::vector<std::int64_t> starts;
  for (std::int64_t i = 0; i < k; ++i) starts.push_back((i * total_steps + k - 1) / k);
  return starts;
}

void TrainConfig::Validate(std::int64_t patch_size) const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("train config: " + what); };
  for (double a : {alpha_warmup, alpha_decay}) {
    if (!(a >= 0.0 && a <= 1.0)) fail("alpha must lie in [0, 1]");
  }
  if (!(huber_delta > 0.0)) fail("huber delta must be positive");
  if (!(mask_rate >= 0.0 && mask_rate < 1.0)) fail("mask rate must lie in [0, 1)");
  if (!(lr >= 0.0)) fail("learning rate must be non-negative");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) fail("warmup fraction must lie in [0, 1)");
  if (total_steps < 1) fail("total steps must be positive");
  if (batch_size < 1) fail("batch size must be positive");
  if (lengths.empty()) fail("curriculum is empty");
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (lengths[i] <= 0 || lengths[i] % patch_size != 0) {
      fail("curriculum length " + std::to_string(lengths[i]) + " is not a multiple of P=" +
           std::to_string(patch_size));
    }
    if (i && lengths[i] <= lengths[i - 1]) fail("curriculum lengths must be strictly increasing");
  }
  const auto starts = PhaseStarts();
  if (starts.size() != lengths.size()) fail("one phase start per curriculum length is required");
  if (starts.front() != 0) fail("the first phase must start at step 0");
  for (std::size_t i = 1; i < starts.size(); ++i) {
    if (starts[i] <= starts[i - 1] || starts[i] >= total_steps) {
      fail("phase starts must be strictly increasing and below total steps");
    }
  }
}

Schedule Schedules(std::int64_t step, const TrainConfig& config) {
  if (step < 0 || step >= config.total_steps) {
    throw std::out_of_range("step " + std::to_string(step) + " outside [0, " +
                            std::to_string(config.total_steps) + ")");
  }
  Schedule s;
  const std::int64_t warm = config.WarmupSteps();
  const std::int64_t last = config.total_steps - 1;
  if (step < warm) {
    s.lr = config.lr * static_cast<double>(step) / static_cast<double>(warm);
    s.alpha = config.alpha_warmup;
  } else {
    const std::int64_t span = last - warm;
    const double progress =
        span > 0 ? static_cast<double>(step - warm) / static_cast<double>(span) : 0.0;
    s.lr = config.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    s.alpha = config.alpha_decay;
  }
  const auto starts = config.PhaseStarts();
  for (std::size_t i = 0; i < starts.size(); ++i) {
    if (step >= starts[i]) s.phase = static_cast<std::int64_t>(i);
  }
  std::int64_t pick = s.phase;
  if (config.curriculum == TrainConfig::Curriculum::kCumulative && s.phase > 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed),
                      static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(step), 3u};
    std::mt19937_64 rng(seq);
    pick = std::uniform_int_distribution<std::int64_t>(0, s.phase)(rng);
  }
  s.length = config.lengths[static_cast<std::size_t>(pick)];
  return s;
}

}  // namespace langtime::train
