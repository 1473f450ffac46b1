#ifndef LANGTIME_DATA_CSV_HPP_
#define LANGTIME_DATA_CSV_HPP_

#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>

#include "langtime/data/series_frame.hpp"

namespace langtime::data {

enum class MissingPolicy { kReject, kForwardFill };

MissingPolicy ParseMissingPolicy(const std::string& name);

struct CsvOptions {
  MissingPolicy missing = MissingPolicy::kReject;
  // Defaults to the file stem when empty.
  std::string dataset_id;
};

struct IngestReport {
  SeriesFrame frame;
  std::int64_t rows_read = 0;
  // Rows dropped because a leading missing value had nothing to fill from.
  std::int64_t rows_dropped = 0;
  std::int64_t cells_filled = 0;
};

// Layout: header row, first column a timestamp, every other column one
// channel. Errors carry 1-based line numbers (the header is line 1).
IngestReport IngestCsv(const std::filesystem::path& path, const CsvOptions& options = {});
IngestReport ParseCsv(std::istream& in, const CsvOptions& options);

}  // namespace langtime::data

#endif  // LANGTIME_DATA_CSV_HPP_
