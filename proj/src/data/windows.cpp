#include "langtime/data/windows.hpp"

#include <numeric>

namespace langtime::data {

std::int64_t WindowCount(std::int64_t length, std::int64_t channels,
                         std::int64_t input_length, std::int64_t target_length,
                         std::int64_t stride) {
  const std::int64_t span = input_length + target_length;
  if (length < span || stride <= 0) return 0;
  return channels * ((length - span) / stride + 1);
}

WindowSet::WindowSet(std::shared_ptr<const SeriesFrame> frame, std::int64_t input_length,
                     std::int64_t target_length, std::int64_t stride,
                     std::int64_t patch_size)
    : frame_(std::move(frame)),
      input_length_(input_length),
      target_length_(target_length),
      stride_(stride) {
  if (patch_size <= 0 || input_length <= 0 || input_length % patch_size != 0) {
    throw DataError("input length " + std::to_string(input_length) +
                    " must be a positive multiple of the patch size " +
                    std::to_string(patch_size));
  }
  if (target_length <= 0) throw DataError("target length must be positive");
  if (stride <= 0) throw DataError("window stride must be positive");
  if (frame_->length() < input_length + target_length) {
    throw DataError("segment of dataset '" + frame_->dataset_id() + "' has " +
                    std::to_string(frame_->length()) + " rows, one window needs " +
                    std::to_string(input_length + target_length));
  }
  count_ = WindowCount(frame_->length(), frame_->channels(), input_length,
                       target_length, stride);
  per_channel_ = count_ / frame_->channels();
}

WindowRef WindowSet::ref(std::int64_t index) const {
  if (index < 0 || index >= count_) throw DataError("window index out of range");
  const std::int64_t channel = index / per_channel_;
  const std::int64_t start = (index % per_channel_) * stride_;
  return WindowRef{frame_->dataset_id(),  frame_->channel_ids()[channel],
                   channel,               start,
                   frame_->timestamps()[start], frame_->step_seconds()};
}

WindowBatch WindowSet::Batch(std::span<const std::int64_t> indices) const {
  WindowBatch batch;
  batch.input_length = input_length_;
  batch.target_length = target_length_;
  batch.inputs.reserve(indices.size() * input_length_);
  batch.targets.reserve(indices.size() * target_length_);
  for (auto index : indices) {
    WindowRef r = ref(index);
    for (std::int64_t t = 0; t < input_length_; ++t) {
      batch.inputs.push_back(frame_->at(r.start + t, r.channel));
    }
    for (std::int64_t t = 0; t < target_length_; ++t) {
      batch.targets.push_back(frame_->at(r.start + input_length_ + t, r.channel));
    }
    batch.refs.push_back(std::move(r));
  }
  return batch;
}

WindowBatch WindowSet::All() const {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(count_));
  std::iota(idx.begin(), idx.end(), 0);
  return Batch(idx);
}

WindowSet MakeWindows(const SeriesFrame& frame, std::int64_t input_length,
                      std::int64_t target_length, std::int64_t stride,
                      std::int64_t patch_size) {
  return WindowSet(std::make_shared<const SeriesFrame>(frame), input_length,
                   target_length, stride, patch_size);
}

}  // namespace langtime::data
