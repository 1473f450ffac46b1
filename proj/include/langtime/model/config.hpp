#ifndef LANGTIME_MODEL_CONFIG_HPP_
#define LANGTIME_MODEL_CONFIG_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "langtime/prompt/layout.hpp"

namespace langtime::model {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  std::string scale = "desk";
  std::int64_t patch_size = 8;   // P
  std::int64_t out_patches = 2;  // N
  std::int64_t d_te = 64;
  std::int64_t d_bb = 64;
  std::int64_t n_te = 2;
  std::int64_t n_bb = 2;
  std::int64_t q_heads = 4;
  std::int64_t kv_heads = 2;
  std::int64_t ffn_mult = 4;
  // Supported input lengths, one head pair each; strictly increasing.
  std::vector<std::int64_t> lengths = {16, 32, 48, 64};
  prompt::LayoutFlags flags;
  // Standardize each window by its own mean and std before encoding and map
  // both outputs back to the input scale.
  bool instance_norm = true;

  static ModelConfig Desk();
  static ModelConfig Paper();

  std::int64_t output_length() const { return out_patches * patch_size; }
  std::int64_t max_length() const { return lengths.back(); }
  std::int64_t max_patches() const { return max_length() / patch_size; }
  // Longest prompt the backbone position table has to cover.
  std::int64_t max_prompt_length() const { return flags.ContextWidth() + max_patches() + 3; }
  bool Supports(std::int64_t length) const;
  std::string LengthsString() const;
  void Validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace langtime::model

#endif  // LANGTIME_MODEL_CONFIG_HPP_
