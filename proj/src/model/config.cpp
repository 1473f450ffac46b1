#include "langtime/model/config.hpp"

namespace langtime::model {

ModelConfig ModelConfig::Desk() { return ModelConfig{}; }

ModelConfig ModelConfig::Paper() {
  ModelConfig c;
  c.scale = "paper";
  c.patch_size = 24;
  c.out_patches = 4;
  c.d_te = 512;
  c.d_bb = 512;
  c.n_te = 4;
  c.n_bb = 4;
  c.q_heads = 8;
  c.kv_heads = 2;
  c.lengths = {96, 288, 480, 672};
  return c;
}

bool ModelConfig::Supports(std::int64_t length) const {
  for (auto l : lengths) {
    if (l == length) return true;
  }
  return false;
}

std::string ModelConfig::LengthsString() const {
  std::string s = "{";
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(lengths[i]);
  }
  return s + "}";
}

void ModelConfig::Validate() const {
  auto fail = [](const std::string& what) { throw ModelError("model config: " + what); };
  if (patch_size < 1 || out_patches < 1) fail("patch_size and out_patches must be >= 1");
  if (d_te < 1 || d_bb < 1 || n_te < 0 || n_bb < 0 || ffn_mult < 1) fail("bad layer sizes");
  if (q_heads < 1 || kv_heads < 1 || q_heads % kv_heads != 0) {
    fail("kv_heads must divide q_heads");
  }
  if (d_te % q_heads != 0 || d_bb % q_heads != 0) fail("q_heads must divide d_te and d_bb");
  if (lengths.empty()) fail("no input lengths");
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (lengths[i] <= 0 || lengths[i] % patch_size != 0) {
      fail("input length " + std::to_string(lengths[i]) + " is not a multiple of P=" +
           std::to_string(patch_size));
    }
    if (i && lengths[i] <= lengths[i - 1]) fail("input lengths must be strictly increasing");
  }
}

}  // namespace langtime::model
