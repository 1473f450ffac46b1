#ifndef LANGTIME_DATA_SERIES_FRAME_HPP_
#define LANGTIME_DATA_SERIES_FRAME_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace langtime::data {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Seconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;

// Accepts `YYYY-MM-DD HH:MM:SS`, ISO-8601 `YYYY-MM-DDTHH:MM:SS[Z]`,
// `YYYY-MM-DD HH:MM` and `YYYY-MM-DD`. Throws DataError otherwise.
Timestamp ParseTimestamp(std::string_view text);
std::string FormatTimestamp(Timestamp ts);

int HourOfDay(Timestamp ts);
// Monday == 0 ... Sunday == 6.
int DayOfWeek(Timestamp ts);

// Coarse tag for a sampling interval, e.g. 3600 -> "hourly".
std::string FrequencyLabel(std::int64_t step_seconds);

// A multivariate series: T rows of C channels, immutable once built.
class SeriesFrame {
 public:
  SeriesFrame() = default;
  // Throws DataError unless timestamps strictly increase, sizes agree and
  // every value is finite.
  SeriesFrame(std::string dataset_id, std::vector<std::string> channel_ids,
              std::vector<Timestamp> timestamps, std::vector<double> values,
              std::string frequency_label = {});

  std::int64_t length() const { return static_cast<std::int64_t>(timestamps_.size()); }
  std::int64_t channels() const { return static_cast<std::int64_t>(channel_ids_.size()); }
  double at(std::int64_t t, std::int64_t c) const { return values_[t * channels() + c]; }

  const std::string& dataset_id() const { return dataset_id_; }
  const std::vector<std::string>& channel_ids() const { return channel_ids_; }
  const std::vector<Timestamp>& timestamps() const { return timestamps_; }
  const std::vector<double>& values() const { return values_; }
  const std::string& frequency_label() const { return frequency_label_; }
  // Median spacing between consecutive timestamps; 0 for a single row.
  std::int64_t step_seconds() const { return step_seconds_; }

  std::vector<double> Channel(std::int64_t c) const;
  // Rows [begin, end).
  SeriesFrame Slice(std::int64_t begin, std::int64_t end) const;
  SeriesFrame WithValues(std::vector<double> values) const;
  SeriesFrame WithDatasetId(std::string dataset_id) const;

 private:
  std::string dataset_id_;
  std::vector<std::string> channel_ids_;
  std::vector<Timestamp> timestamps_;
  std::vector<double> values_;
  std::string frequency_label_;
  std::int64_t step_seconds_ = 0;
};

}  // namespace langtime::data

#endif  // LANGTIME_DATA_SERIES_FRAME_HPP_
