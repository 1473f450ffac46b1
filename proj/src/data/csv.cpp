#include "langtime/data/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <string_view>
#include <vector>

namespace langtime::data {

namespace {

std::vector<std::string_view> SplitFields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? line.npos
                                                                     : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string_view Trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) {
    s.remove_prefix(1);
  }
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '"' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

// nullopt for a missing cell; throws on anything non-numeric.
std::optional<double> ParseCell(std::string_view cell, std::int64_t line,
                                const std::string& column) {
  cell = Trim(cell);
  if (cell.empty() || cell == "NaN" || cell == "nan" || cell == "NA") return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
    throw DataError("non-numeric cell '" + std::string(cell) + "' at line " +
                    std::to_string(line) + ", column " + column);
  }
  return v;
}

}  // namespace

MissingPolicy ParseMissingPolicy(const std::string& name) {
  if (name == "reject") return MissingPolicy::kReject;
  if (name == "forward-fill" || name == "forward_fill" || name == "ffill") {
    return MissingPolicy::kForwardFill;
  }
  throw DataError("unknown missing-value policy '" + name + "'");
}

IngestReport ParseCsv(std::istream& in, const CsvOptions& options) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV: header row required");
  const auto header = SplitFields(line);
  if (header.size() < 2) throw DataError("CSV needs a timestamp column and at least one channel");
  std::vector<std::string> channels;
  for (std::size_t i = 1; i < header.size(); ++i) channels.emplace_back(Trim(header[i]));

  IngestReport report;
  std::vector<Timestamp> timestamps;
  std::vector<double> values;
  std::vector<double> last(channels.size(), 0.0);
  bool have_last = false;
  std::int64_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    ++report.rows_read;
    const auto fields = SplitFields(line);
    if (fields.size() != header.size()) {
      throw DataError("line " + std::to_string(line_no) + " has " +
                      std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(header.size()));
    }
    Timestamp ts = 0;
    try {
      ts = ParseTimestamp(fields[0]);
    } catch (const DataError& e) {
      throw DataError(std::string(e.what()) + " at line " + std::to_string(line_no));
    }
    std::vector<double> row(channels.size());
    bool drop = false;
    for (std::size_t c = 0; c < channels.size(); ++c) {
      const auto cell = ParseCell(fields[c + 1], line_no, channels[c]);
      if (cell) {
        row[c] = *cell;
        continue;
      }
      if (options.missing == MissingPolicy::kReject) {
        throw DataError("missing value at line " + std::to_string(line_no) +
                        ", column " + channels[c]);
      }
      if (!have_last) {
        drop = true;
        break;
      }
      row[c] = last[c];
      ++report.cells_filled;
    }
    if (drop) {
      ++report.rows_dropped;
      continue;
    }
    timestamps.push_back(ts);
    values.insert(values.end(), row.begin(), row.end());
    last = row;
    have_last = true;
  }
  if (timestamps.empty()) throw DataError("CSV holds no usable rows");
  report.frame = SeriesFrame(options.dataset_id.empty() ? "dataset" : options.dataset_id,
                             std::move(channels), std::move(timestamps), std::move(values));
  return report;
}

IngestReport IngestCsv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file " + path.string());
  CsvOptions resolved = options;
  if (resolved.dataset_id.empty()) resolved.dataset_id = path.stem().string();
  try {
    return ParseCsv(in, resolved);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace langtime::data
