#include "langtime/cli/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <memory>

#include "langtime/data/csv.hpp"
#include "langtime/util/format.hpp"

namespace langtime::cli {

std::vector<data::SeriesFrame> LoadSource(const DataSource& source) {
  std::vector<data::SeriesFrame> frames;
  if (source.source == "synthetic") {
    frames.push_back(data::GenerateSynthetic(source.synthetic));
  } else {
    for (const auto& path : source.paths) {
      frames.push_back(data::IngestCsv(path, {source.missing, ""}).frame);
    }
  }
  return frames;
}

std::vector<PreparedDataset> Prepare(const std::vector<data::SeriesFrame>& frames,
                                     const data::SplitSpec& split, std::int64_t min_length) {
  std::vector<PreparedDataset> out;
  for (const auto& frame : frames) {
    auto s = data::ChronologicalSplit(frame, split, min_length);
    PreparedDataset p;
    p.id = frame.dataset_id();
    p.stats = data::ComputeStats(s.pretrain);
    for (auto seg : {data::Segment::kPretrain, data::Segment::kFinetune, data::Segment::kVal,
                     data::Segment::kTest}) {
      p.segments[static_cast<int>(seg)] =
          std::make_shared<const data::SeriesFrame>(data::Normalize(s.get(seg), p.stats));
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<train::FramePtr> Segments(const std::vector<PreparedDataset>& sets, data::Segment s) {
  std::vector<train::FramePtr> out;
  for (const auto& p : sets) out.push_back(p.get(s));
  return out;
}

ErrorMetrics ComputeMetrics(std::span<const double> predictions, std::span<const double> truth,
                            std::int64_t horizon, std::int64_t tail) {
  if (predictions.size() != truth.size()) {
    throw std::invalid_argument("metrics: " + std::to_string(predictions.size()) +
                                " predictions for " + std::to_string(truth.size()) + " targets");
  }
  if (horizon <= 0 || predictions.empty() || predictions.size() % horizon != 0) {
    throw std::invalid_argument("metrics: " + std::to_string(predictions.size()) +
                                " points do not form rows of horizon " + std::to_string(horizon));
  }
  if (tail <= 0 || tail > horizon) {
    throw std::invalid_argument("metrics: tail " + std::to_string(tail) + " outside [1, " +
                                std::to_string(horizon) + "]");
  }
  ErrorMetrics m;
  const auto rows = static_cast<std::int64_t>(predictions.size()) / horizon;
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t j = 0; j < horizon; ++j) {
      const double d = predictions[r * horizon + j] - truth[r * horizon + j];
      m.mse += d * d;
      m.mae += std::abs(d);
      if (j >= horizon - tail) {
        m.tail_mse += d * d;
        m.tail_mae += std::abs(d);
      }
    }
  }
  const double n = static_cast<double>(rows * horizon), nt = static_cast<double>(rows * tail);
  m.mse /= n;
  m.mae /= n;
  m.tail_mse /= nt;
  m.tail_mae /= nt;
  return m;
}

Evaluation EvaluateFrame(const model::Forecaster& model, const train::FramePtr& frame,
                         std::int64_t input_length, std::int64_t horizon, std::int64_t tail,
                         std::int64_t stride, bool allow_truncation) {
  constexpr std::int64_t kChunk = 64;
  data::WindowSet windows(frame, input_length, horizon, stride, model.config().patch_size);
  std::vector<double> preds, truth;
  for (std::int64_t begin = 0; begin < windows.size(); begin += kChunk) {
    std::vector<std::int64_t> idx;
    for (std::int64_t i = begin; i < std::min(windows.size(), begin + kChunk); ++i) idx.push_back(i);
    auto batch = windows.Batch(idx);
    auto state = model::Rollout(model, batch, {horizon, allow_truncation});
    auto p = state.Predictions(horizon);
    preds.insert(preds.end(), p.data().begin(), p.data().end());
    truth.insert(truth.end(), batch.targets.begin(), batch.targets.end());
  }
  return {ComputeMetrics(preds, truth, horizon, tail), windows.size()};
}

std::string MetricsHeader() {
  return "kind,dataset,horizon,tail,stage,seed,config_hash,checkpoint_hash,unknown_dataset,windows,"
         "mse,mae,tail_mse,tail_mae";
}

std::string MetricsLine(const MetricRow& r) {
  using util::FormatDouble;
  return util::CsvLine({r.kind, r.dataset, std::to_string(r.horizon), std::to_string(r.tail),
                        r.stage, std::to_string(r.seed), r.config_hash, r.checkpoint_hash,
                        r.unknown_dataset ? "true" : "false", std::to_string(r.windows),
                        FormatDouble(r.metrics.mse), FormatDouble(r.metrics.mae),
                        FormatDouble(r.metrics.tail_mse), FormatDouble(r.metrics.tail_mae)});
}

std::string FileHash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return util::Fnv1aHex(bytes);
}

}  // namespace langtime::cli
