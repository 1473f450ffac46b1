#ifndef LANGTIME_DATA_WINDOWS_HPP_
#define LANGTIME_DATA_WINDOWS_HPP_

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "langtime/data/series_frame.hpp"

namespace langtime::data {

// Identifies where a single-channel window came from; this is what the prompt
// context is built from.
struct WindowRef {
  std::string dataset_id;
  std::string channel_id;
  std::int64_t channel = 0;
  // Row of the first input point inside the source frame.
  std::int64_t start = 0;
  Timestamp start_time = 0;
  std::int64_t step_seconds = 0;

  friend bool operator==(const WindowRef&, const WindowRef&) = default;
};

// B single-channel windows stored row-major: inputs is B x L, targets B x F.
struct WindowBatch {
  std::int64_t input_length = 0;
  std::int64_t target_length = 0;
  std::vector<double> inputs;
  std::vector<double> targets;
  std::vector<WindowRef> refs;

  std::int64_t size() const { return static_cast<std::int64_t>(refs.size()); }
  std::span<const double> input(std::int64_t b) const {
    return {inputs.data() + b * input_length, static_cast<std::size_t>(input_length)};
  }
  std::span<const double> target(std::int64_t b) const {
    return {targets.data() + b * target_length, static_cast<std::size_t>(target_length)};
  }
};

// Number of sliding windows: C * floor((T - L - F) / stride + 1), or 0 when
// a single window does not fit.
std::int64_t WindowCount(std::int64_t length, std::int64_t channels,
                         std::int64_t input_length, std::int64_t target_length,
                         std::int64_t stride);

// Channel-independent sliding windows over one frame. Index order is
// channel-major: all windows of channel 0, then channel 1, ...
class WindowSet {
 public:
  // Throws DataError when input_length is not a multiple of patch_size or the
  // frame is shorter than one window.
  WindowSet(std::shared_ptr<const SeriesFrame> frame, std::int64_t input_length,
            std::int64_t target_length, std::int64_t stride, std::int64_t patch_size);

  std::int64_t size() const { return count_; }
  std::int64_t input_length() const { return input_length_; }
  std::int64_t target_length() const { return target_length_; }
  const SeriesFrame& frame() const { return *frame_; }

  WindowRef ref(std::int64_t index) const;
  WindowBatch Batch(std::span<const std::int64_t> indices) const;
  WindowBatch All() const;

 private:
  std::shared_ptr<const SeriesFrame> frame_;
  std::int64_t input_length_;
  std::int64_t target_length_;
  std::int64_t stride_;
  std::int64_t per_channel_ = 0;
  std::int64_t count_ = 0;
};

WindowSet MakeWindows(const SeriesFrame& frame, std::int64_t input_length,
                      std::int64_t target_length, std::int64_t stride,
                      std::int64_t patch_size);

}  // namespace langtime::data

#endif  // LANGTIME_DATA_WINDOWS_HPP_
