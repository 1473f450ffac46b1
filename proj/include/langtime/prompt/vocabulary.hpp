#ifndef LANGTIME_PROMPT_VOCABULARY_HPP_
#define LANGTIME_PROMPT_VOCABULARY_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "langtime/data/series_frame.hpp"

namespace langtime::prompt {

using TokenId = std::int64_t;

class PromptError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dataset and channel descriptions. Channel keys are "dataset/channel".
// Descriptions are documentation only; the model sees ids.
struct MetadataRegistry {
  std::map<std::string, std::string> datasets;
  std::map<std::string, std::string> channels;

  // INI layout: a [datasets] section of `id = description` lines and a
  // [channels] section of `dataset/channel = description` lines.
  static MetadataRegistry Load(const std::filesystem::path& path);
  void Save(const std::filesystem::path& path) const;
  void Add(const data::SeriesFrame& frame);
};

std::string ChannelKey(const std::string& dataset_id, const std::string& channel_id);

// Token table of the prompt. Ids are laid out as the fixed specials, then 24
// hour-of-day buckets, 7 day-of-week buckets, known datasets, known channels.
class PromptVocabulary {
 public:
  static constexpr TokenId kBos = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kEmb = 2;
  static constexpr TokenId kOut = 3;
  static constexpr TokenId kMask = 4;
  static constexpr TokenId kUnkDataset = 5;
  static constexpr TokenId kUnkChannel = 6;
  static constexpr TokenId kHourBase = 7;
  static constexpr TokenId kDowBase = kHourBase + 24;
  static constexpr TokenId kFirstDataset = kDowBase + 7;

  PromptVocabulary() = default;
  // Ids are sorted so the table does not depend on insertion order.
  PromptVocabulary(std::vector<std::string> dataset_ids,
                   std::vector<std::string> channel_keys);
  static PromptVocabulary FromRegistry(const MetadataRegistry& registry);

  TokenId Hour(std::int64_t hour) const;
  TokenId DayOfWeek(std::int64_t dow) const;
  // Unknown ids map to the UNK tokens.
  TokenId Dataset(const std::string& dataset_id) const;
  TokenId Channel(const std::string& dataset_id, const std::string& channel_id) const;
  bool KnowsDataset(const std::string& dataset_id) const;

  const std::vector<std::string>& dataset_ids() const { return dataset_ids_; }
  const std::vector<std::string>& channel_keys() const { return channel_keys_; }
  std::int64_t size() const;

  friend bool operator==(const PromptVocabulary&, const PromptVocabulary&) = default;

 private:
  std::vector<std::string> dataset_ids_;
  std::vector<std::string> channel_keys_;
  std::map<std::string, TokenId> dataset_index_;
  std::map<std::string, TokenId> channel_index_;
};

}  // namespace langtime::prompt

#endif  // LANGTIME_PROMPT_VOCABULARY_HPP_
