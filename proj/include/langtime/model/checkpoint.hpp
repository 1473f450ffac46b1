#ifndef LANGTIME_MODEL_CHECKPOINT_HPP_
#define LANGTIME_MODEL_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <string>

#include "langtime/model/forecaster.hpp"

namespace langtime::model {

inline constexpr int kCheckpointFormatVersion = 1;

// File layout: 8-byte magic "LTCKPT01", u64 little-endian manifest size, the
// JSON manifest (format version, config hash, stage, seed, model config, vocabulary,
// tensor directory of name/shape/dtype/offset), then the raw little-endian
// f64 payload. Save then load is bit-exact.
struct CheckpointInfo {
  std::string config_hash;
  // Training stage that produced the weights: pretrain, sft or timeppo.
  std::string stage = "pretrain";
  std::uint64_t seed = 0;

  friend bool operator==(const CheckpointInfo&, const CheckpointInfo&) = default;
};

void SaveCheckpoint(const std::filesystem::path& path, const Forecaster& model,
                    const CheckpointInfo& info);

struct LoadedCheckpoint {
  Forecaster model;
  CheckpointInfo info;
};

LoadedCheckpoint LoadCheckpoint(const std::filesystem::path& path);

}  // namespace langtime::model

#endif  // LANGTIME_MODEL_CHECKPOINT_HPP_
