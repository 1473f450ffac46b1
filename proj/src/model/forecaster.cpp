#include "langtime/model/forecaster.hpp"

#include <algorithm>
#include <cmath>

namespace langtime::model {

using ad::Graph;
using ad::Tensor;
using ad::Var;
using prompt::PromptLayout;

namespace {

constexpr double kInitStd = 0.02;
constexpr double kInstanceNormEps = 1e-5;

std::string Key(const std::string& prefix, std::int64_t i, const std::string& leaf) {
  return prefix + "." + std::to_string(i) + "." + leaf;
}

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Tensor Normal(ad::Shape shape) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> n(0.0, kInitStd);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = n(rng_);
    return t;
  }

 private:
  std::mt19937_64 rng_;
};

void AddBlock(ParamStore& s, Initializer& init, const std::string& prefix, std::int64_t i,
              std::int64_t d, const ModelConfig& c) {
  const std::int64_t hd = d / c.q_heads;
  s.Add(Key(prefix, i, "ln1.g"), Tensor({d}, 1.0));
  s.Add(Key(prefix, i, "ln1.b"), Tensor({d}));
  s.Add(Key(prefix, i, "attn.wq"), init.Normal({d, d}));
  s.Add(Key(prefix, i, "attn.wk"), init.Normal({d, c.kv_heads * hd}));
  s.Add(Key(prefix, i, "attn.wv"), init.Normal({d, c.kv_heads * hd}));
  s.Add(Key(prefix, i, "attn.wo"), init.Normal({d, d}));
  s.Add(Key(prefix, i, "ln2.g"), Tensor({d}, 1.0));
  s.Add(Key(prefix, i, "ln2.b"), Tensor({d}));
  s.Add(Key(prefix, i, "ffn.w1"), init.Normal({d, c.ffn_mult * d}));
  s.Add(Key(prefix, i, "ffn.b1"), Tensor({c.ffn_mult * d}));
  s.Add(Key(prefix, i, "ffn.w2"), init.Normal({c.ffn_mult * d, d}));
  s.Add(Key(prefix, i, "ffn.b2"), Tensor({d}));
}

Var Linear(const BoundParams& p, Var x, const std::string& w, const std::string& b) {
  Graph& g = p.graph();
  return g.Add(g.MatMul(x, p(w)), p(b));
}

std::vector<std::int64_t> Iota(std::int64_t n) {
  std::vector<std::int64_t> v(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

// Grouped-query self-attention over x [B, S, D]; kv head k serves query heads
// k*(q/kv) .. (k+1)*(q/kv)-1.
Var Attention(const BoundParams& p, const ModelConfig& c, const std::string& prefix,
              std::int64_t layer, Var x, bool causal) {
  Graph& g = p.graph();
  const auto& shape = g.shape(x);
  const std::int64_t b = shape[0], s = shape[1], d = shape[2];
  const std::int64_t hq = c.q_heads, hkv = c.kv_heads, hd = d / hq;

  auto heads = [&](Var v, std::int64_t h) {
    return g.Permute(g.Reshape(v, {b, s, h, hd}), {0, 2, 1, 3});
  };
  Var q = g.Reshape(heads(g.MatMul(x, p(Key(prefix, layer, "attn.wq"))), hq), {b * hq, s, hd});
  Var k = heads(g.MatMul(x, p(Key(prefix, layer, "attn.wk"))), hkv);
  Var v = heads(g.MatMul(x, p(Key(prefix, layer, "attn.wv"))), hkv);
  if (hkv != hq) {
    std::vector<std::int64_t> group(static_cast<std::size_t>(hq));
    for (std::int64_t h = 0; h < hq; ++h) group[h] = h / (hq / hkv);
    k = g.IndexSelect(k, 1, group);
    v = g.IndexSelect(v, 1, group);
  }
  k = g.Reshape(k, {b * hq, s, hd});
  v = g.Reshape(v, {b * hq, s, hd});

  Var scores = g.Scale(g.MatMul(q, k, /*transpose_b=*/true), 1.0 / std::sqrt(double(hd)));
  Var out = g.MatMul(g.Softmax(scores, causal), v);
  out = g.Reshape(g.Permute(g.Reshape(out, {b, hq, s, hd}), {0, 2, 1, 3}), {b, s, d});
  return g.MatMul(out, p(Key(prefix, layer, "attn.wo")));
}

Var Block(const BoundParams& p, const ModelConfig& c, const std::string& prefix,
          std::int64_t layer, Var x, bool causal) {
  Graph& g = p.graph();
  Var h = g.LayerNorm(x, p(Key(prefix, layer, "ln1.g")), p(Key(prefix, layer, "ln1.b")));
  x = g.Add(x, Attention(p, c, prefix, layer, h, causal));
  h = g.LayerNorm(x, p(Key(prefix, layer, "ln2.g")), p(Key(prefix, layer, "ln2.b")));
  h = g.Gelu(Linear(p, h, Key(prefix, layer, "ffn.w1"), Key(prefix, layer, "ffn.b1")));
  h = Linear(p, h, Key(prefix, layer, "ffn.w2"), Key(prefix, layer, "ffn.b2"));
  return g.Add(x, h);
}

std::string HeadName(const char* kind, std::int64_t length, const char* leaf) {
  return std::string("head.") + kind + "." + std::to_string(length) + "." + leaf;
}

}  // namespace

ParamStore InitParams(const ModelConfig& c, std::int64_t vocab_size, std::uint64_t seed) {
  c.Validate();
  ParamStore s;
  Initializer init(seed);
  s.Add("patch.w", init.Normal({c.patch_size, c.d_te}));
  s.Add("patch.b", Tensor({c.d_te}));
  s.Add("te.pos", init.Normal({c.max_patches(), c.d_te}));
  for (std::int64_t i = 0; i < c.n_te; ++i) AddBlock(s, init, "te", i, c.d_te, c);
  s.Add("te.ln.g", Tensor({c.d_te}, 1.0));
  s.Add("te.ln.b", Tensor({c.d_te}));
  s.Add("bridge.w", init.Normal({c.d_te, c.d_bb}));
  s.Add("bridge.b", Tensor({c.d_bb}));
  s.Add("prompt.embed", init.Normal({vocab_size, c.d_bb}));
  s.Add("bb.pos", init.Normal({c.max_prompt_length(), c.d_bb}));
  for (std::int64_t i = 0; i < c.n_bb; ++i) AddBlock(s, init, "bb", i, c.d_bb, c);
  s.Add("bb.ln.g", Tensor({c.d_bb}, 1.0));
  s.Add("bb.ln.b", Tensor({c.d_bb}));
  for (auto len : c.lengths) {
    s.Add(HeadName("rec", len, "w"), init.Normal({c.d_bb, len}));
    s.Add(HeadName("rec", len, "b"), Tensor({len}));
    s.Add(HeadName("pred", len, "w"), init.Normal({c.d_bb, c.output_length()}));
    s.Add(HeadName("pred", len, "b"), Tensor({c.output_length()}));
  }
  return s;
}

Forecaster::Forecaster(ModelConfig config, prompt::PromptVocabulary vocab, std::uint64_t seed)
    : config_(std::move(config)), vocab_(std::move(vocab)) {
  params_ = InitParams(config_, vocab_.size(), seed);
}

Forecaster::Forecaster(ModelConfig config, prompt::PromptVocabulary vocab, ParamStore params)
    : config_(std::move(config)), vocab_(std::move(vocab)), params_(std::move(params)) {
  const ParamStore expected = InitParams(config_, vocab_.size(), 0);
  if (expected.names() != params_.names()) {
    throw ModelError("parameter set does not match the model config");
  }
  for (const auto& name : expected.names()) {
    if (expected.at(name).shape() != params_.at(name).shape()) {
      throw ModelError("parameter " + name + " has shape " +
                       ad::ShapeToString(params_.at(name).shape()) + ", expected " +
                       ad::ShapeToString(expected.at(name).shape()));
    }
  }
}

PromptLayout Forecaster::Layout(const data::WindowRef& ref, data::Timestamp context_start,
                                std::int64_t input_length) const {
  if (input_length % config_.patch_size != 0) {
    throw ModelError("input length " + std::to_string(input_length) +
                     " is not a multiple of P=" + std::to_string(config_.patch_size));
  }
  return prompt::BuildPromptLayout(vocab_, ref.dataset_id, ref.channel_id, context_start,
                                   input_length / config_.patch_size, config_.out_patches,
                                   config_.flags);
}

std::vector<PromptLayout> Forecaster::Layouts(const std::vector<data::WindowRef>& refs,
                                              std::int64_t input_length) const {
  std::vector<PromptLayout> out;
  out.reserve(refs.size());
  for (const auto& r : refs) out.push_back(Layout(r, r.start_time, input_length));
  return out;
}

Var EncodePatches(const Forecaster& f, const BoundParams& p, Var windows) {
  const auto& c = f.config();
  Graph& g = p.graph();
  const auto& shape = g.shape(windows);
  if (shape.size() != 2) throw ModelError("windows must be [B, L]");
  const std::int64_t b = shape[0], len = shape[1];
  if (len % c.patch_size != 0) {
    throw ModelError("window length " + std::to_string(len) + " is not a multiple of P=" +
                     std::to_string(c.patch_size));
  }
  const std::int64_t n = len / c.patch_size;
  if (n > c.max_patches()) {
    throw ModelError("window length " + std::to_string(len) + " exceeds the longest input " +
                     std::to_string(c.max_length()));
  }
  Var h = g.Reshape(windows, {b, n, c.patch_size});
  h = Linear(p, h, "patch.w", "patch.b");
  h = g.Add(h, g.IndexSelect(p("te.pos"), 0, Iota(n)));
  for (std::int64_t i = 0; i < c.n_te; ++i) h = Block(p, c, "te", i, h, /*causal=*/false);
  h = g.LayerNorm(h, p("te.ln.g"), p("te.ln.b"));
  return Linear(p, h, "bridge.w", "bridge.b");
}

std::int64_t MaskCount(std::int64_t n, double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ModelError("mask rate must lie in [0, 1)");
  return std::llround(static_cast<double>(n) * rate);
}

std::vector<std::int64_t> SampleMaskPositions(std::int64_t n, double rate,
                                              std::mt19937_64& rng) {
  const std::int64_t k = MaskCount(n, rate);
  std::vector<std::int64_t> pool = Iota(n);
  // Partial Fisher-Yates: the first k entries are a uniform k-subset.
  for (std::int64_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::int64_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(static_cast<std::size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

MaskedPatches ApplyMask(const BoundParams& p, Var patches, double rate, std::mt19937_64& rng) {
  Graph& g = p.graph();
  const auto shape = g.shape(patches);
  const std::int64_t b = shape[0], n = shape[1], d = shape[2];
  MaskedPatches out;
  out.values = patches;
  out.positions.resize(static_cast<std::size_t>(b));
  if (MaskCount(n, rate) == 0) return out;

  Tensor keep(shape, 1.0);
  Tensor drop(shape, 0.0);
  for (std::int64_t r = 0; r < b; ++r) {
    out.positions[r] = SampleMaskPositions(n, rate, rng);
    for (auto pos : out.positions[r]) {
      for (std::int64_t k = 0; k < d; ++k) {
        keep[(r * n + pos) * d + k] = 0.0;
        drop[(r * n + pos) * d + k] = 1.0;
      }
    }
  }
  Var token = g.Reshape(
      g.IndexSelect(p("prompt.embed"), 0, {prompt::PromptVocabulary::kMask}), {d});
  out.values = g.Add(g.Mul(patches, g.Constant(std::move(keep))),
                     g.Mul(g.Constant(std::move(drop)), token));
  return out;
}

Var AssemblePrompt(const Forecaster& f, const BoundParams& p,
                   const std::vector<PromptLayout>& layouts, Var values) {
  Graph& g = p.graph();
  const auto& shape = g.shape(values);
  if (shape.size() != 3 || shape[0] != static_cast<std::int64_t>(layouts.size())) {
    throw ModelError("value embeddings " + ad::ShapeToString(shape) + " do not match " +
                     std::to_string(layouts.size()) + " layouts");
  }
  if (shape[1] != layouts.front().n_patches_in) {
    throw ModelError("prompt has " + std::to_string(layouts.front().n_patches_in) +
                     " value slots but " + std::to_string(shape[1]) + " were filled");
  }
  auto ctx = prompt::EncodeContext(g, p("prompt.embed"), layouts, f.config().d_bb);
  std::vector<Var> parts;
  if (ctx.prefix.valid()) parts.push_back(ctx.prefix);
  parts.push_back(values);
  parts.push_back(ctx.suffix);
  return g.Concat(parts, 1);
}

Var BackboneForward(const Forecaster& f, const BoundParams& p, Var prompt_embeddings) {
  const auto& c = f.config();
  Graph& g = p.graph();
  const std::int64_t s = g.shape(prompt_embeddings)[1];
  if (s > c.max_prompt_length()) {
    throw ModelError("prompt of length " + std::to_string(s) + " exceeds the position table");
  }
  Var h = g.Add(prompt_embeddings, g.IndexSelect(p("bb.pos"), 0, Iota(s)));
  for (std::int64_t i = 0; i < c.n_bb; ++i) h = Block(p, c, "bb", i, h, /*causal=*/true);
  return g.LayerNorm(h, p("bb.ln.g"), p("bb.ln.b"));
}

Decoded DecodeOutputs(const Forecaster& f, const BoundParams& p, Var hidden,
                      const PromptLayout& layout, std::int64_t input_length) {
  const auto& c = f.config();
  if (!c.Supports(input_length)) {
    throw ModelError("no head for input length " + std::to_string(input_length) +
                     "; supported lengths " + c.LengthsString());
  }
  Graph& g = p.graph();
  const auto& shape = g.shape(hidden);
  if (layout.out_index >= shape[1]) throw ModelError("layout does not fit the hidden states");
  const std::int64_t b = shape[0], d = shape[2];
  auto row = [&](std::int64_t pos) {
    return g.Reshape(g.IndexSelect(hidden, 1, {pos}), {b, d});
  };
  Decoded out;
  out.reconstruction = Linear(p, row(layout.emb_index - 1), HeadName("rec", input_length, "w"),
                              HeadName("rec", input_length, "b"));
  out.prediction = Linear(p, row(layout.out_index - 1), HeadName("pred", input_length, "w"),
                          HeadName("pred", input_length, "b"));
  return out;
}

ForwardResult Forward(const Forecaster& f, const BoundParams& p, Var windows,
                      const std::vector<PromptLayout>& layouts, const ForwardOptions& options) {
  Graph& g = p.graph();
  const std::int64_t len = g.shape(windows)[1];
  if (!f.config().Supports(len)) {
    throw ModelError("no head for input length " + std::to_string(len) +
                     "; supported lengths " + f.config().LengthsString());
  }
  ForwardResult r;
  Var mean, scale;
  Var encoder_input = windows;
  if (f.config().instance_norm) {
    mean = g.MeanLastAxis(windows);
    Var centered = g.Sub(windows, g.ExpandLast(mean, len));
    Var var = g.MeanLastAxis(g.Square(centered));
    scale = g.Exp(g.Scale(g.Log(g.Shift(var, kInstanceNormEps)), 0.5));
    encoder_input = g.Mul(centered, g.ExpandLast(g.Reciprocal(scale), len));
  }
  Var values = EncodePatches(f, p, encoder_input);
  if (options.mask_rate > 0.0) {
    if (options.rng == nullptr) throw ModelError("masking needs a random generator");
    auto masked = ApplyMask(p, values, options.mask_rate, *options.rng);
    values = masked.values;
    r.mask_positions = std::move(masked.positions);
  }
  r.hidden = BackboneForward(f, p, AssemblePrompt(f, p, layouts, values));
  auto dec = DecodeOutputs(f, p, r.hidden, layouts.front(), len);
  r.reconstruction = dec.reconstruction;
  r.prediction = dec.prediction;
  if (f.config().instance_norm) {
    auto restore = [&](Var v) {
      const std::int64_t w = g.shape(v)[1];
      return g.Add(g.Mul(v, g.ExpandLast(scale, w)), g.ExpandLast(mean, w));
    };
    r.reconstruction = restore(r.reconstruction);
    r.prediction = restore(r.prediction);
  }
  return r;
}

Tensor Predict(const Forecaster& f, const Tensor& windows, const std::vector<PromptLayout>& layouts) {
  Graph g;
  BoundParams p(g, f.params(), /*differentiable=*/false);
  auto r = Forward(f, p, g.Constant(windows), layouts);
  return g.value(r.prediction);
}

std::int64_t ContextLength(const ModelConfig& config, std::int64_t available) {
  std::int64_t best = 0;
  for (auto l : config.lengths) {
    if (l <= available) best = l;
  }
  if (best == 0) {
    throw ModelError("history of " + std::to_string(available) +
                     " points is shorter than every supported length " + config.LengthsString());
  }
  return best;
}

std::int64_t RolloutSteps(const ModelConfig& config, std::int64_t horizon, bool allow_truncation) {
  const std::int64_t np = config.output_length();
  if (horizon < 1) throw ModelError("horizon must be positive");
  if (horizon % np != 0 && !allow_truncation) {
    throw ModelError("horizon " + std::to_string(horizon) + " is not a multiple of N*P=" +
                     std::to_string(np));
  }
  return (horizon + np - 1) / np;
}

Tensor ForecastState::Predictions(std::int64_t horizon) const {
  const std::int64_t b = batch();
  std::int64_t have = 0;
  for (const auto& t : step_predictions) have += t.dim(1);
  if (horizon > have) {
    throw ModelError("rollout produced " + std::to_string(have) + " points, " +
                     std::to_string(horizon) + " requested");
  }
  Tensor out({b, horizon});
  std::int64_t col = 0;
  for (const auto& t : step_predictions) {
    const std::int64_t w = t.dim(1);
    for (std::int64_t j = 0; j < w && col + j < horizon; ++j) {
      for (std::int64_t r = 0; r < b; ++r) out[r * horizon + col + j] = t[r * w + j];
    }
    col += w;
  }
  return out;
}

ForecastState StartRollout(const Forecaster& f, const data::WindowBatch& initial) {
  if (!f.config().Supports(initial.input_length)) {
    throw ModelError("initial window length " + std::to_string(initial.input_length) +
                     " is not a supported length " + f.config().LengthsString());
  }
  if (initial.size() == 0) throw ModelError("empty rollout batch");
  ForecastState s;
  s.origins = initial.refs;
  for (std::int64_t b = 0; b < initial.size(); ++b) {
    auto in = initial.input(b);
    s.history.emplace_back(in.begin(), in.end());
  }
  return s;
}

StepInput CurrentInput(const Forecaster& f, const ForecastState& state) {
  StepInput in;
  const std::int64_t avail = state.available();
  in.length = ContextLength(f.config(), avail);
  const std::int64_t offset = avail - in.length;
  in.windows = Tensor({state.batch(), in.length});
  for (std::int64_t b = 0; b < state.batch(); ++b) {
    const auto& h = state.history[b];
    std::copy(h.begin() + offset, h.end(), in.windows.data().begin() + b * in.length);
    const auto& ref = state.origins[b];
    in.layouts.push_back(f.Layout(ref, ref.start_time + offset * ref.step_seconds, in.length));
  }
  return in;
}

void Advance(ForecastState& state, const StepInput& input, const Tensor& prediction) {
  const std::int64_t b = state.batch();
  if (prediction.rank() != 2 || prediction.dim(0) != b) {
    throw ModelError("prediction shape " + ad::ShapeToString(prediction.shape()) +
                     " does not match the rollout batch");
  }
  const std::int64_t w = prediction.dim(1);
  state.context_lengths.push_back(input.length);
  for (std::int64_t r = 0; r < b; ++r) {
    for (std::int64_t j = 0; j < w; ++j) state.history[r].push_back(prediction[r * w + j]);
  }
  state.step_predictions.push_back(prediction);
  ++state.step;
}

ForecastState Rollout(const Forecaster& f, const data::WindowBatch& initial,
                      const RolloutOptions& options) {
  const std::int64_t steps = RolloutSteps(f.config(), options.horizon, options.allow_truncation);
  ForecastState s = StartRollout(f, initial);
  for (std::int64_t t = 0; t < steps; ++t) {
    StepInput in = CurrentInput(f, s);
    Tensor pred = Predict(f, in.windows, in.layouts);
    Advance(s, in, pred);
  }
  return s;
}

}  // namespace langtime::model
