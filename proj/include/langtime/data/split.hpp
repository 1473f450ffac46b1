#ifndef LANGTIME_DATA_SPLIT_HPP_
#define LANGTIME_DATA_SPLIT_HPP_

#include <array>
#include <cstdint>
#include <string>

#include "langtime/data/series_frame.hpp"

namespace langtime::data {

struct SplitSpec {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
  // Share of the training fraction used for pre-training; the rest is the
  // fine-tuning segment.
  double pretrain_share = 0.8;

  static SplitSpec EttStyle() { return {0.6, 0.2, 0.2, 0.8}; }
  void Validate() const;
};

struct SegmentBounds {
  std::int64_t begin = 0;
  std::int64_t end = 0;
  std::int64_t size() const { return end - begin; }
};

enum class Segment { kPretrain = 0, kFinetune = 1, kVal = 2, kTest = 3 };
const char* SegmentName(Segment s);

struct Splits {
  SeriesFrame pretrain;
  SeriesFrame finetune;
  SeriesFrame val;
  SeriesFrame test;
  std::array<SegmentBounds, 4> bounds;

  const SeriesFrame& get(Segment s) const;
};

// Segment sizes: train = floor(T * train), val = floor(T * val),
// test = T - train - val; pretrain = floor(train * pretrain_share).
std::array<SegmentBounds, 4> SplitBoundaries(std::int64_t length, const SplitSpec& spec);

// Four contiguous, disjoint, time-ordered segments. Every segment must hold
// at least `min_segment_length` rows (one full window); otherwise throws
// DataError naming the segment.
Splits ChronologicalSplit(const SeriesFrame& frame, const SplitSpec& spec,
                          std::int64_t min_segment_length);

}  // namespace langtime::data

#endif  // LANGTIME_DATA_SPLIT_HPP_
