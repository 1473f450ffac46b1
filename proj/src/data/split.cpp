#include "langtime/data/split.hpp"

#include <cmath>

namespace langtime::data {

namespace {

// Guards against products like 0.7 * 1000 landing a hair below the integer.
std::int64_t FloorShare(std::int64_t n, double share) {
  return static_cast<std::int64_t>(std::floor(static_cast<double>(n) * share + 1e-9));
}

}  // namespace

void SplitSpec::Validate() const {
  if (!(train > 0 && val > 0 && test > 0)) {
    throw DataError("split fractions must be positive");
  }
  if (std::abs(train + val + test - 1.0) > 1e-9) {
    throw DataError("split fractions must sum to 1");
  }
  if (!(pretrain_share > 0 && pretrain_share < 1)) {
    throw DataError("pretrain share must lie in (0, 1)");
  }
}

const char* SegmentName(Segment s) {
  switch (s) {
    case Segment::kPretrain: return "pretrain";
    case Segment::kFinetune: return "finetune";
    case Segment::kVal: return "val";
    case Segment::kTest: return "test";
  }
  return "unknown";
}

const SeriesFrame& Splits::get(Segment s) const {
  switch (s) {
    case Segment::kPretrain: return pretrain;
    case Segment::kFinetune: return finetune;
    case Segment::kVal: return val;
    case Segment::kTest: return test;
  }
  return test;
}

std::array<SegmentBounds, 4> SplitBoundaries(std::int64_t length, const SplitSpec& spec) {
  spec.Validate();
  const std::int64_t n_train = FloorShare(length, spec.train);
  const std::int64_t n_val = FloorShare(length, spec.val);
  const std::int64_t n_pre = FloorShare(n_train, spec.pretrain_share);
  std::array<SegmentBounds, 4> b;
  b[0] = {0, n_pre};
  b[1] = {n_pre, n_train};
  b[2] = {n_train, n_train + n_val};
  b[3] = {n_train + n_val, length};
  return b;
}

Splits ChronologicalSplit(const SeriesFrame& frame, const SplitSpec& spec,
                          std::int64_t min_segment_length) {
  const auto bounds = SplitBoundaries(frame.length(), spec);
  for (int i = 0; i < 4; ++i) {
    if (bounds[i].size() < std::max<std::int64_t>(1, min_segment_length)) {
      throw DataError(std::string(SegmentName(static_cast<Segment>(i))) +
                      " split of dataset '" + frame.dataset_id() + "' holds " +
                      std::to_string(bounds[i].size()) + " rows, need at least " +
                      std::to_string(min_segment_length) + " for one window");
    }
  }
  return Splits{frame.Slice(bounds[0].begin, bounds[0].end),
                frame.Slice(bounds[1].begin, bounds[1].end),
                frame.Slice(bounds[2].begin, bounds[2].end),
                frame.Slice(bounds[3].begin, bounds[3].end), bounds};
}

}  // namespace langtime::data
