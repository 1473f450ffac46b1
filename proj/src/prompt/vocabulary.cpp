#include "langtime/prompt/vocabulary.hpp"

#include <algorithm>
#include <fstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace langtime::prompt {

namespace pt = boost::property_tree;

std::string ChannelKey(const std::string& dataset_id, const std::string& channel_id) {
  return dataset_id + "/" + channel_id;
}

MetadataRegistry MetadataRegistry::Load(const std::filesystem::path& path) {
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw PromptError("registry " + path.string() + ": " + e.message() + " (line " +
                      std::to_string(e.line()) + ")");
  }
  MetadataRegistry reg;
  for (const auto& [section, body] : tree) {
    std::map<std::string, std::string>* target = nullptr;
    if (section == "datasets") {
      target = &reg.datasets;
    } else if (section == "channels") {
      target = &reg.channels;
    } else {
      throw PromptError("registry " + path.string() + ": unknown section [" + section + "]");
    }
    for (const auto& [key, value] : body) {
      if (target == &reg.channels && key.find('/') == std::string::npos) {
        throw PromptError("registry " + path.string() + ": channel key '" + key +
                          "' is not of the form dataset/channel");
      }
      (*target)[key] = value.get_value<std::string>();
    }
  }
  return reg;
}

void MetadataRegistry::Save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw PromptError("cannot write registry " + path.string());
  out << "[datasets]\n";
  for (const auto& [k, v] : datasets) out << k << " = " << v << '\n';
  out << "\n[channels]\n";
  for (const auto& [k, v] : channels) out << k << " = " << v << '\n';
}

void MetadataRegistry::Add(const data::SeriesFrame& frame) {
  datasets.try_emplace(frame.dataset_id(), frame.dataset_id());
  for (const auto& ch : frame.channel_ids()) {
    channels.try_emplace(ChannelKey(frame.dataset_id(), ch), ch);
  }
}

PromptVocabulary::PromptVocabulary(std::vector<std::string> dataset_ids,
                                   std::vector<std::string> channel_keys)
    : dataset_ids_(std::move(dataset_ids)), channel_keys_(std::move(channel_keys)) {
  std::sort(dataset_ids_.begin(), dataset_ids_.end());
  dataset_ids_.erase(std::unique(dataset_ids_.begin(), dataset_ids_.end()), dataset_ids_.end());
  std::sort(channel_keys_.begin(), channel_keys_.end());
  channel_keys_.erase(std::unique(channel_keys_.begin(), channel_keys_.end()),
                      channel_keys_.end());
  TokenId next = kFirstDataset;
  for (const auto& id : dataset_ids_) dataset_index_[id] = next++;
  for (const auto& key : channel_keys_) channel_index_[key] = next++;
}

PromptVocabulary PromptVocabulary::FromRegistry(const MetadataRegistry& registry) {
  std::vector<std::string> ds, ch;
  for (const auto& [k, v] : registry.datasets) ds.push_back(k);
  for (const auto& [k, v] : registry.channels) ch.push_back(k);
  return PromptVocabulary(std::move(ds), std::move(ch));
}

TokenId PromptVocabulary::Hour(std::int64_t hour) const {
  if (hour < 0 || hour > 23) throw PromptError("hour bucket out of range: " + std::to_string(hour));
  return kHourBase + hour;
}

TokenId PromptVocabulary::DayOfWeek(std::int64_t dow) const {
  if (dow < 0 || dow > 6) throw PromptError("weekday bucket out of range: " + std::to_string(dow));
  return kDowBase + dow;
}

TokenId PromptVocabulary::Dataset(const std::string& dataset_id) const {
  auto it = dataset_index_.find(dataset_id);
  return it == dataset_index_.end() ? kUnkDataset : it->second;
}

TokenId PromptVocabulary::Channel(const std::string& dataset_id,
                                  const std::string& channel_id) const {
  auto it = channel_index_.find(ChannelKey(dataset_id, channel_id));
  return it == channel_index_.end() ? kUnkChannel : it->second;
}

bool PromptVocabulary::KnowsDataset(const std::string& dataset_id) const {
  return dataset_index_.count(dataset_id) > 0;
}

std::int64_t PromptVocabulary::size() const {
  return kFirstDataset + static_cast<std::int64_t>(dataset_ids_.size() + channel_keys_.size());
}

}  // namespace langtime::prompt
