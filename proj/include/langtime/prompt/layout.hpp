#ifndef LANGTIME_PROMPT_LAYOUT_HPP_
#define LANGTIME_PROMPT_LAYOUT_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "langtime/autodiff/graph.hpp"
#include "langtime/data/series_frame.hpp"
#include "langtime/prompt/vocabulary.hpp"

namespace langtime::prompt {

enum class SlotKind { kContext, kValue, kEmb, kOut };

struct Slot {
  SlotKind kind = SlotKind::kContext;
  // Token id for context and placeholder slots, patch index for value slots.
  std::int64_t token = 0;
  friend bool operator==(const Slot&, const Slot&) = default;
};

// Which context fields are emitted. Turning one off removes its tokens:
// guidance is the BOS token (1), timestamp is hour + weekday (2), dataset and
// channel are one token each.
struct LayoutFlags {
  bool guidance = true;
  bool timestamp = true;
  bool dataset = true;
  bool channel = true;

  std::int64_t ContextWidth() const;
  friend bool operator==(const LayoutFlags&, const LayoutFlags&) = default;
};

struct PromptLayout {
  std::vector<Slot> slots;
  std::int64_t emb_index = 0;
  std::int64_t out_index = 0;
  std::int64_t n_patches_in = 0;
  std::int64_t n_patches_out = 0;

  std::int64_t length() const { return static_cast<std::int64_t>(slots.size()); }
  // Position of the first value slot.
  std::int64_t value_begin() const { return emb_index - n_patches_in; }
  // Tokens before the value slots and after them, in order.
  std::vector<TokenId> PrefixTokens() const;
  std::vector<TokenId> SuffixTokens() const;
  bool SameStructure(const PromptLayout& other) const;
};

// [BOS, hour, weekday, dataset, channel, values..., EMB, OUT, EOS], minus any
// fields switched off in `flags`.
PromptLayout BuildPromptLayout(const PromptVocabulary& vocab, const std::string& dataset_id,
                               const std::string& channel_id, data::Timestamp start,
                               std::int64_t n_patches_in, std::int64_t n_patches_out,
                               const LayoutFlags& flags = {});

// Context embeddings for a batch of layouts that share one structure. The
// value slots are not represented; the caller concatenates
// prefix [B, p, D], the value embeddings [B, n, D] and suffix [B, s, D].
// `prefix` is invalid when every prefix field is switched off.
struct ContextEmbeddings {
  ad::Var prefix;
  ad::Var suffix;
};

ContextEmbeddings EncodeContext(ad::Graph& g, ad::Var table,
                                const std::vector<PromptLayout>& layouts,
                                std::int64_t model_dim);

// Plain lookup of one layout: [length, D] with zero rows at value slots.
ad::Tensor EmbedContext(const PromptLayout& layout, const ad::Tensor& table,
                        std::int64_t model_dim);

}  // namespace langtime::prompt

#endif  // LANGTIME_PROMPT_LAYOUT_HPP_
