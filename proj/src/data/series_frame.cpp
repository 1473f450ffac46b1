#include "langtime/data/series_frame.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>

namespace langtime::data {

namespace {

bool ReadInt(std::string_view text, std::size_t pos, std::size_t width, int& out) {
  if (pos + width > text.size()) return false;
  auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + width, out);
  return ec == std::errc() && ptr == text.data() + pos + width;
}

}  // namespace

Timestamp ParseTimestamp(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '"')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '"' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  if (!text.empty() && text.back() == 'Z') text.remove_suffix(1);

  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  bool ok = text.size() >= 10 && ReadInt(text, 0, 4, y) && text[4] == '-' &&
            ReadInt(text, 5, 2, mo) && text[7] == '-' && ReadInt(text, 8, 2, d);
  if (ok && text.size() > 10) {
    ok = (text[10] == ' ' || text[10] == 'T') && text.size() >= 16 &&
         ReadInt(text, 11, 2, h) && text[13] == ':' && ReadInt(text, 14, 2, mi);
    if (ok && text.size() > 16) {
      ok = text.size() == 19 && text[16] == ':' && ReadInt(text, 17, 2, s);
    }
  }
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ok || !ymd.ok() || h > 23 || mi > 59 || s > 60) {
    throw DataError("unparseable timestamp '" + std::string(text) + "'");
  }
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<Timestamp>(days) * 86400 + h * 3600 + mi * 60 + s;
}

std::string FormatTimestamp(Timestamp ts) {
  using namespace std::chrono;
  const auto day_count = static_cast<int>(std::floor(static_cast<double>(ts) / 86400.0));
  const year_month_day ymd{sys_days{days{day_count}}};
  const Timestamp rem = ts - static_cast<Timestamp>(day_count) * 86400;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u %02d:%02d:%02d",
                static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()), static_cast<int>(rem / 3600),
                static_cast<int>((rem % 3600) / 60), static_cast<int>(rem % 60));
  return buf;
}

int HourOfDay(Timestamp ts) {
  const Timestamp rem = ((ts % 86400) + 86400) % 86400;
  return static_cast<int>(rem / 3600);
}

int DayOfWeek(Timestamp ts) {
  using namespace std::chrono;
  const auto day_count = static_cast<int>(std::floor(static_cast<double>(ts) / 86400.0));
  const weekday wd{sys_days{days{day_count}}};
  return static_cast<int>(wd.iso_encoding()) - 1;
}

std::string FrequencyLabel(std::int64_t step_seconds) {
  switch (step_seconds) {
    case 60: return "minutely";
    case 600: return "10min";
    case 900: return "15min";
    case 1800: return "30min";
    case 3600: return "hourly";
    case 86400: return "daily";
    case 604800: return "weekly";
    default: return step_seconds > 0 ? std::to_string(step_seconds) + "s" : "unknown";
  }
}

SeriesFrame::SeriesFrame(std::string dataset_id, std::vector<std::string> channel_ids,
                         std::vector<Timestamp> timestamps, std::vector<double> values,
                         std::string frequency_label)
    : dataset_id_(std::move(dataset_id)),
      channel_ids_(std::move(channel_ids)),
      timestamps_(std::move(timestamps)),
      values_(std::move(values)),
      frequency_label_(std::move(frequency_label)) {
  if (channel_ids_.empty()) throw DataError("series has no channels");
  if (values_.size() != timestamps_.size() * channel_ids_.size()) {
    throw DataError("value count does not match rows x channels");
  }
  for (std::size_t i = 1; i < timestamps_.size(); ++i) {
    if (timestamps_[i] <= timestamps_[i - 1]) {
      throw DataError("timestamps not strictly increasing at row " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw DataError("non-finite value at row " +
                      std::to_string(i / channel_ids_.size()) + ", channel " +
                      channel_ids_[i % channel_ids_.size()]);
    }
  }
  if (timestamps_.size() > 1) {
    std::vector<std::int64_t> deltas(timestamps_.size() - 1);
    for (std::size_t i = 1; i < timestamps_.size(); ++i) {
      deltas[i - 1] = timestamps_[i] - timestamps_[i - 1];
    }
    std::nth_element(deltas.begin(), deltas.begin() + deltas.size() / 2, deltas.end());
    step_seconds_ = deltas[deltas.size() / 2];
  }
  if (frequency_label_.empty()) frequency_label_ = FrequencyLabel(step_seconds_);
}

std::vector<double> SeriesFrame::Channel(std::int64_t c) const {
  std::vector<double> out(static_cast<std::size_t>(length()));
  for (std::int64_t t = 0; t < length(); ++t) out[t] = at(t, c);
  return out;
}

SeriesFrame SeriesFrame::Slice(std::int64_t begin, std::int64_t end) const {
  if (begin < 0 || end > length() || begin >= end) {
    throw DataError("invalid slice [" + std::to_string(begin) + ", " +
                    std::to_string(end) + ") of a series with " +
                    std::to_string(length()) + " rows");
  }
  const auto c = channels();
  SeriesFrame out = *this;
  out.timestamps_.assign(timestamps_.begin() + begin, timestamps_.begin() + end);
  out.values_.assign(values_.begin() + begin * c, values_.begin() + end * c);
  return out;
}

SeriesFrame SeriesFrame::WithValues(std::vector<double> values) const {
  return SeriesFrame(dataset_id_, channel_ids_, timestamps_, std::move(values),
                     frequency_label_);
}

SeriesFrame SeriesFrame::WithDatasetId(std::string dataset_id) const {
  SeriesFrame out = *this;
  out.dataset_id_ = std::move(dataset_id);
  return out;
}

}  // namespace langtime::data
