#ifndef LANGTIME_CLI_PIPELINE_HPP_
#define LANGTIME_CLI_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "langtime/cli/experiment.hpp"
#include "langtime/data/normalize.hpp"
#include "langtime/model/forecaster.hpp"
#include "langtime/train/pretrainer.hpp"

namespace langtime::cli {

// One dataset split chronologically and normalized with statistics of its
// pre-training segment.
struct PreparedDataset {
  std::string id;
  data::ChannelStats stats;
  std::array<train::FramePtr, 4> segments;  // indexed by data::Segment

  const train::FramePtr& get(data::Segment s) const { return segments[static_cast<int>(s)]; }
};

std::vector<data::SeriesFrame> LoadSource(const DataSource& source);
std::vector<PreparedDataset> Prepare(const std::vector<data::SeriesFrame>& frames,
                                     const data::SplitSpec& split, std::int64_t min_length);
std::vector<train::FramePtr> Segments(const std::vector<PreparedDataset>& sets, data::Segment s);

struct ErrorMetrics {
  double mse = 0.0;
  double mae = 0.0;
  double tail_mse = 0.0;
  double tail_mae = 0.0;
};

// Rows of `horizon` points each; the tail is the last `tail` points of every
// row.
ErrorMetrics ComputeMetrics(std::span<const double> predictions, std::span<const double> truth,
                            std::int64_t horizon, std::int64_t tail);

struct Evaluation {
  ErrorMetrics metrics;
  std::int64_t windows = 0;
};

// Autoregressive forecasts over every window of the frame.
Evaluation EvaluateFrame(const model::Forecaster& model, const train::FramePtr& frame,
                         std::int64_t input_length, std::int64_t horizon, std::int64_t tail,
                         std::int64_t stride, bool allow_truncation);

struct MetricRow {
  std::string kind;  // evaluate or zero-shot
  std::string dataset;
  std::int64_t horizon = 0;
  std::int64_t tail = 0;
  std::string stage;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string checkpoint_hash;
  bool unknown_dataset = false;
  std::int64_t windows = 0;
  ErrorMetrics metrics;
};

std::string MetricsHeader();
std::string MetricsLine(const MetricRow& row);

std::string FileHash(const std::filesystem::path& path);

}  // namespace langtime::cli

#endif  // LANGTIME_CLI_PIPELINE_HPP_
