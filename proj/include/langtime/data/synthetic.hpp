#ifndef LANGTIME_DATA_SYNTHETIC_HPP_
#define LANGTIME_DATA_SYNTHETIC_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "langtime/data/series_frame.hpp"

namespace langtime::data {

// Each channel is
//   sum_k amplitude_k * sin(2 pi t / period_k + phase_{c,k}) + trend_slope * t + e_t
// with AR(1) noise e_t = ar_coeff * e_{t-1} + noise_sigma * z_t, z_t ~ N(0, 1),
// e_0 drawn from the stationary distribution. Phases are uniform in
// [0, 2 pi) per channel and component.
struct SyntheticSpec {
  std::int64_t channels = 3;
  std::int64_t length = 4000;
  std::uint64_t seed = 7;
  std::vector<double> periods = {24.0, 168.0};
  std::vector<double> amplitudes = {1.0, 0.5};
  double trend_slope = 0.0002;
  double ar_coeff = 0.8;
  double noise_sigma = 0.1;
  std::string dataset_id = "synthetic";
  std::string start = "2020-01-01 00:00:00";
  std::int64_t step_seconds = 3600;
};

// Keys: channels, length, seed, periods, amplitudes, trend_slope, ar_coeff,
// noise_sigma, dataset_id, start, step_seconds. Lists are comma separated.
// Missing keys keep their defaults; unknown keys are rejected.
SyntheticSpec ParseSyntheticSpec(const std::map<std::string, std::string>& keys);

SeriesFrame GenerateSynthetic(const SyntheticSpec& spec);

}  // namespace langtime::data

#endif  // LANGTIME_DATA_SYNTHETIC_HPP_
