#ifndef LANGTIME_MODEL_FORECASTER_HPP_
#define LANGTIME_MODEL_FORECASTER_HPP_

#include <cstdint>
#include <random>
#include <vector>

#include "langtime/autodiff/graph.hpp"
#include "langtime/data/windows.hpp"
#include "langtime/model/config.hpp"
#include "langtime/model/params.hpp"
#include "langtime/prompt/layout.hpp"

namespace langtime::model {

// Configuration, prompt vocabulary and parameters of one forecaster.
//
// Parameter names: patch.*, te.pos, te.<i>.*, te.ln.*, bridge.*, prompt.embed
// (whose kMask row is the mask token), bb.pos, bb.<i>.*, bb.ln.*,
// head.rec.<L>.*, head.pred.<L>.*.
class Forecaster {
 public:
  Forecaster(ModelConfig config, prompt::PromptVocabulary vocab, std::uint64_t seed);
  // Adopts existing parameters; names and shapes must match the config.
  Forecaster(ModelConfig config, prompt::PromptVocabulary vocab, ParamStore params);

  const ModelConfig& config() const { return config_; }
  const prompt::PromptVocabulary& vocab() const { return vocab_; }
  const ParamStore& params() const { return params_; }
  ParamStore& params() { return params_; }

  prompt::PromptLayout Layout(const data::WindowRef& ref, data::Timestamp context_start,
                              std::int64_t input_length) const;
  // Layouts for windows that start at their own start_time.
  std::vector<prompt::PromptLayout> Layouts(const std::vector<data::WindowRef>& refs,
                                            std::int64_t input_length) const;

 private:
  ModelConfig config_;
  prompt::PromptVocabulary vocab_;
  ParamStore params_;
};

// Fresh parameters for a config, deterministic in the seed.
ParamStore InitParams(const ModelConfig& config, std::int64_t vocab_size, std::uint64_t seed);

// [B, L] -> [B, L/P, d_bb]. Bidirectional temporal encoder, then the bridge.
ad::Var EncodePatches(const Forecaster& f, const BoundParams& p, ad::Var windows);

// round(n * rate), the number of masked patches out of n.
std::int64_t MaskCount(std::int64_t n, double rate);
// Sorted positions, drawn uniformly without replacement.
std::vector<std::int64_t> SampleMaskPositions(std::int64_t n, double rate, std::mt19937_64& rng);

struct MaskedPatches {
  ad::Var values;
  // Per batch row.
  std::vector<std::vector<std::int64_t>> positions;
};

// Replaces MaskCount(n, rate) patches of every row with the mask token.
MaskedPatches ApplyMask(const BoundParams& p, ad::Var patches, double rate,
                        std::mt19937_64& rng);

// Prompt embeddings [B, S, d_bb] with the value slots filled by `values`.
ad::Var AssemblePrompt(const Forecaster& f, const BoundParams& p,
                       const std::vector<prompt::PromptLayout>& layouts, ad::Var values);
// Causal stack over [B, S, d_bb]; hidden state i only sees positions <= i.
ad::Var BackboneForward(const Forecaster& f, const BoundParams& p, ad::Var prompt);

struct Decoded {
  ad::Var reconstruction;  // [B, L] from hidden[emb_index - 1]
  ad::Var prediction;      // [B, N*P] from hidden[out_index - 1]
};
Decoded DecodeOutputs(const Forecaster& f, const BoundParams& p, ad::Var hidden,
                      const prompt::PromptLayout& layout, std::int64_t input_length);

struct ForwardOptions {
  double mask_rate = 0.0;
  std::mt19937_64* rng = nullptr;  // required when mask_rate > 0
};

struct ForwardResult {
  ad::Var reconstruction;
  ad::Var prediction;
  ad::Var hidden;
  std::vector<std::vector<std::int64_t>> mask_positions;
};

// windows: [B, L] with one layout per row. With instance_norm the encoder sees
// (x - mean) / std per row and both outputs are scaled back.
ForwardResult Forward(const Forecaster& f, const BoundParams& p, ad::Var windows,
                      const std::vector<prompt::PromptLayout>& layouts,
                      const ForwardOptions& options = {});

// Inference without gradients: [B, L] -> [B, N*P].
ad::Tensor Predict(const Forecaster& f, const ad::Tensor& windows,
                   const std::vector<prompt::PromptLayout>& layouts);

// Longest supported input length that fits in `available` points.
std::int64_t ContextLength(const ModelConfig& config, std::int64_t available);
// Steps needed for `horizon`; a remainder is an error unless truncation is
// allowed, in which case the last step is cut short.
std::int64_t RolloutSteps(const ModelConfig& config, std::int64_t horizon, bool allow_truncation);

// Autoregressive state for a batch. The history holds the initial window
// followed by every prediction so far; the context is its most recent
// ContextLength(history) points, so it grows through the supported lengths
// and then slides at the longest one.
struct ForecastState {
  std::vector<data::WindowRef> origins;
  std::vector<std::vector<double>> history;
  std::vector<ad::Tensor> step_predictions;  // each [B, N*P]
  std::vector<std::int64_t> context_lengths;  // context used at each step
  std::int64_t step = 0;

  std::int64_t batch() const { return static_cast<std::int64_t>(origins.size()); }
  std::int64_t available() const { return static_cast<std::int64_t>(history.front().size()); }
  // First `horizon` predicted points per row, [B, horizon].
  ad::Tensor Predictions(std::int64_t horizon) const;
};

struct StepInput {
  std::int64_t length = 0;
  ad::Tensor windows;  // [B, length]
  std::vector<prompt::PromptLayout> layouts;
};

ForecastState StartRollout(const Forecaster& f, const data::WindowBatch& initial);
StepInput CurrentInput(const Forecaster& f, const ForecastState& state);
// Appends the prediction made from `input` to the history.
void Advance(ForecastState& state, const StepInput& input, const ad::Tensor& prediction);

struct RolloutOptions {
  std::int64_t horizon = 0;
  bool allow_truncation = false;
};

ForecastState Rollout(const Forecaster& f, const data::WindowBatch& initial,
                      const RolloutOptions& options);

}  // namespace langtime::model

#endif  // LANGTIME_MODEL_FORECASTER_HPP_
