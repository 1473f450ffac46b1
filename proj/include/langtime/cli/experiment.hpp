#ifndef LANGTIME_CLI_EXPERIMENT_HPP_
#define LANGTIME_CLI_EXPERIMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "langtime/data/csv.hpp"
#include "langtime/data/split.hpp"
#include "langtime/data/synthetic.hpp"
#include "langtime/model/config.hpp"
#include "langtime/ppo/finetune.hpp"
#include "langtime/train/schedule.hpp"

namespace langtime::cli {

// Bad configuration or arguments; maps to exit status 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataSource {
  std::string source = "synthetic";  // synthetic or csv
  std::vector<std::string> paths;
  data::MissingPolicy missing = data::MissingPolicy::kReject;
  data::SyntheticSpec synthetic;
};

struct EvalConfig {
  std::string checkpoint;
  std::vector<std::int64_t> horizons = {16, 64};
  std::vector<std::int64_t> tails = {8, 16};
  std::int64_t input_length = 16;
  std::int64_t stride = 1;
  std::string segment = "test";
  bool allow_truncation = false;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "run";
  DataSource data;
  std::string split = "default";  // default or ett
  DataSource zeroshot;
  model::ModelConfig model;
  train::TrainConfig pretrain;
  std::int64_t pretrain_stride = 1;
  std::int64_t val_stride = 4;
  std::string finetune_checkpoint;
  ppo::FinetuneConfig finetune;
  EvalConfig eval;
  std::vector<std::string> export_runs;

  data::SplitSpec SplitSpec() const;
};

// "section.key=value" pairs applied over the file, in order.
using Overrides = std::vector<std::pair<std::string, std::string>>;
std::pair<std::string, std::string> ParseOverride(const std::string& text);

// Reads an INI file (empty path: defaults only), applies overrides and
// validates. Unknown sections or keys are errors.
ExperimentConfig LoadExperiment(const std::filesystem::path& path, const Overrides& overrides);
ExperimentConfig ParseExperiment(const std::map<std::string, std::map<std::string, std::string>>& ini);

// Every setting in a fixed order, INI syntax. Parsing it back gives the same
// config.
std::string CanonicalText(const ExperimentConfig& c);
// Hash of the canonical text without run.out_dir and export.runs.
std::string ConfigHash(const ExperimentConfig& c);

}  // namespace langtime::cli

#endif  // LANGTIME_CLI_EXPERIMENT_HPP_
