#ifndef LANGTIME_UTIL_FORMAT_HPP_
#define LANGTIME_UTIL_FORMAT_HPP_

#include <string>
#include <vector>

namespace langtime::util {

// Shortest decimal text that parses back to exactly `v`.
std::string FormatDouble(double v);

// Comma-joined fields.
std::string CsvLine(const std::vector<std::string>& fields);

// 64-bit FNV-1a of `text`, as 16 hex digits.
std::string Fnv1aHex(const std::string& text);

}  // namespace langtime::util

#endif  // LANGTIME_UTIL_FORMAT_HPP_
