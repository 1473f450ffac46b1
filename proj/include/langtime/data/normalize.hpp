#ifndef LANGTIME_DATA_NORMALIZE_HPP_
#define LANGTIME_DATA_NORMALIZE_HPP_

#include <string>
#include <vector>

#include "langtime/data/series_frame.hpp"

namespace langtime::data {

inline constexpr double kStdFloor = 1e-8;

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> std;
  // One entry per channel whose std was floored.
  std::vector<std::string> warnings;
};

// Per-channel mean and population std over `source` (the training segment).
ChannelStats ComputeStats(const SeriesFrame& source);

SeriesFrame Normalize(const SeriesFrame& frame, const ChannelStats& stats);
SeriesFrame Denormalize(const SeriesFrame& frame, const ChannelStats& stats);

}  // namespace langtime::data

#endif  // LANGTIME_DATA_NORMALIZE_HPP_
