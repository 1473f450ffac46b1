#include "langtime/data/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace langtime::data {

namespace {

std::vector<double> ParseList(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw DataError("bad list entry '" + item + "'");
    }
  }
  return out;
}

}  // namespace

SyntheticSpec ParseSyntheticSpec(const std::map<std::string, std::string>& keys) {
  SyntheticSpec spec;
  for (const auto& [key, value] : keys) {
    try {
      if (key == "channels") spec.channels = std::stoll(value);
      else if (key == "length") spec.length = std::stoll(value);
      else if (key == "seed") spec.seed = std::stoull(value);
      else if (key == "periods") spec.periods = ParseList(value);
      else if (key == "amplitudes") spec.amplitudes = ParseList(value);
      else if (key == "trend_slope") spec.trend_slope = std::stod(value);
      else if (key == "ar_coeff") spec.ar_coeff = std::stod(value);
      else if (key == "noise_sigma") spec.noise_sigma = std::stod(value);
      else if (key == "dataset_id") spec.dataset_id = value;
      else if (key == "start") spec.start = value;
      else if (key == "step_seconds") spec.step_seconds = std::stoll(value);
      else throw DataError("unknown synthetic key '" + key + "'");
    } catch (const std::logic_error&) {
      throw DataError("bad value '" + value + "' for synthetic key '" + key + "'");
    }
  }
  return spec;
}

SeriesFrame GenerateSynthetic(const SyntheticSpec& spec) {
  if (spec.length <= 0 || spec.channels <= 0) {
    throw DataError("synthetic length and channels must be positive");
  }
  if (spec.periods.size() != spec.amplitudes.size()) {
    throw DataError("synthetic periods and amplitudes must have equal length");
  }
  for (double p : spec.periods) {
    if (!(p > 0.0)) throw DataError("synthetic periods must be positive");
  }
  if (!(std::abs(spec.ar_coeff) < 1.0)) throw DataError("ar_coeff must lie in (-1, 1)");
  if (spec.noise_sigma < 0.0) throw DataError("noise_sigma must be >= 0");

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> normal(0.0, 1.0);

  const auto t_len = spec.length;
  const auto c_len = spec.channels;
  std::vector<double> values(static_cast<std::size_t>(t_len * c_len));
  std::vector<std::string> ids;
  for (std::int64_t c = 0; c < c_len; ++c) {
    ids.push_back("ch" + std::to_string(c));
    std::vector<double> phases(spec.periods.size());
    for (auto& p : phases) p = phase_dist(rng);
    const double stationary_sd =
        spec.noise_sigma / std::sqrt(1.0 - spec.ar_coeff * spec.ar_coeff);
    double noise = stationary_sd * normal(rng);
    for (std::int64_t t = 0; t < t_len; ++t) {
      if (t > 0) noise = spec.ar_coeff * noise + spec.noise_sigma * normal(rng);
      double v = spec.trend_slope * static_cast<double>(t);
      for (std::size_t k = 0; k < spec.periods.size(); ++k) {
        v += spec.amplitudes[k] *
             std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / spec.periods[k] +
                      phases[k]);
      }
      values[t * c_len + c] = v + (spec.noise_sigma > 0.0 ? noise : 0.0);
    }
  }
  const Timestamp start = ParseTimestamp(spec.start);
  std::vector<Timestamp> ts(static_cast<std::size_t>(t_len));
  for (std::int64_t t = 0; t < t_len; ++t) ts[t] = start + t * spec.step_seconds;
  return SeriesFrame(spec.dataset_id, std::move(ids), std::move(ts), std::move(values));
}

}  // namespace langtime::data
