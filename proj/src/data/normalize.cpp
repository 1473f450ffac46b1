#include "langtime/data/normalize.hpp"

#include <cmath>

namespace langtime::data {

ChannelStats ComputeStats(const SeriesFrame& source) {
  const auto c_len = source.channels();
  const auto t_len = source.length();
  ChannelStats stats;
  stats.mean.assign(c_len, 0.0);
  stats.std.assign(c_len, 0.0);
  for (std::int64_t c = 0; c < c_len; ++c) {
    double mean = 0.0;
    for (std::int64_t t = 0; t < t_len; ++t) mean += source.at(t, c);
    mean /= static_cast<double>(t_len);
    double var = 0.0;
    for (std::int64_t t = 0; t < t_len; ++t) {
      const double d = source.at(t, c) - mean;
      var += d * d;
    }
    double sd = std::sqrt(var / static_cast<double>(t_len));
    if (!(sd > kStdFloor)) {
      stats.warnings.push_back("channel '" + source.channel_ids()[c] +
                               "' has zero variance; std floored at 1e-8");
      sd = kStdFloor;
    }
    stats.mean[c] = mean;
    stats.std[c] = sd;
  }
  return stats;
}

namespace {

SeriesFrame Transform(const SeriesFrame& frame, const ChannelStats& stats, bool forward) {
  const auto c_len = frame.channels();
  if (static_cast<std::int64_t>(stats.mean.size()) != c_len) {
    throw DataError("normalization stats cover " + std::to_string(stats.mean.size()) +
                    " channels, frame has " + std::to_string(c_len));
  }
  std::vector<double> out = frame.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto c = i % c_len;
    out[i] = forward ? (out[i] - stats.mean[c]) / stats.std[c]
                     : out[i] * stats.std[c] + stats.mean[c];
  }
  return frame.WithValues(std::move(out));
}

}  // namespace

SeriesFrame Normalize(const SeriesFrame& frame, const ChannelStats& stats) {
  return Transform(frame, stats, true);
}

SeriesFrame Denormalize(const SeriesFrame& frame, const ChannelStats& stats) {
  return Transform(frame, stats, false);
}

}  // namespace langtime::data
