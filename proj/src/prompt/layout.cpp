#include "langtime/prompt/layout.hpp"

namespace langtime::prompt {

std::int64_t LayoutFlags::ContextWidth() const {
  return (guidance ? 1 : 0) + (timestamp ? 2 : 0) + (dataset ? 1 : 0) + (channel ? 1 : 0);
}

std::vector<TokenId> PromptLayout::PrefixTokens() const {
  std::vector<TokenId> out;
  for (std::int64_t i = 0; i < value_begin(); ++i) out.push_back(slots[i].token);
  return out;
}

std::vector<TokenId> PromptLayout::SuffixTokens() const {
  std::vector<TokenId> out;
  for (std::int64_t i = emb_index; i < length(); ++i) out.push_back(slots[i].token);
  return out;
}

bool PromptLayout::SameStructure(const PromptLayout& other) const {
  if (length() != other.length() || emb_index != other.emb_index ||
      out_index != other.out_index || n_patches_out != other.n_patches_out) {
    return false;
  }
  for (std::int64_t i = 0; i < length(); ++i) {
    if (slots[i].kind != other.slots[i].kind) return false;
  }
  return true;
}

PromptLayout BuildPromptLayout(const PromptVocabulary& vocab, const std::string& dataset_id,
                               const std::string& channel_id, data::Timestamp start,
                               std::int64_t n_patches_in, std::int64_t n_patches_out,
                               const LayoutFlags& flags) {
  if (n_patches_in < 1) throw PromptError("prompt needs at least one value slot");
  if (n_patches_out < 1) throw PromptError("prompt needs N >= 1 output patches");
  PromptLayout layout;
  layout.n_patches_in = n_patches_in;
  layout.n_patches_out = n_patches_out;
  auto& s = layout.slots;
  if (flags.guidance) s.push_back({SlotKind::kContext, PromptVocabulary::kBos});
  if (flags.timestamp) {
    s.push_back({SlotKind::kContext, vocab.Hour(data::HourOfDay(start))});
    s.push_back({SlotKind::kContext, vocab.DayOfWeek(data::DayOfWeek(start))});
  }
  if (flags.dataset) s.push_back({SlotKind::kContext, vocab.Dataset(dataset_id)});
  if (flags.channel) s.push_back({SlotKind::kContext, vocab.Channel(dataset_id, channel_id)});
  for (std::int64_t k = 0; k < n_patches_in; ++k) s.push_back({SlotKind::kValue, k});
  layout.emb_index = static_cast<std::int64_t>(s.size());
  s.push_back({SlotKind::kEmb, PromptVocabulary::kEmb});
  layout.out_index = static_cast<std::int64_t>(s.size());
  s.push_back({SlotKind::kOut, PromptVocabulary::kOut});
  s.push_back({SlotKind::kContext, PromptVocabulary::kEos});
  return layout;
}

namespace {

void CheckTable(const ad::Shape& shape, std::int64_t model_dim) {
  if (shape.size() != 2 || shape[1] != model_dim) {
    throw PromptError("prompt embedding table has shape " + ad::ShapeToString(shape) +
                      ", expected [V," + std::to_string(model_dim) + "]");
  }
}

ad::Var Lookup(ad::Graph& g, ad::Var table, const std::vector<std::vector<TokenId>>& rows) {
  std::vector<std::int64_t> ids;
  for (const auto& r : rows) ids.insert(ids.end(), r.begin(), r.end());
  const auto b = static_cast<std::int64_t>(rows.size());
  const auto w = static_cast<std::int64_t>(rows.front().size());
  const auto d = g.shape(table)[1];
  return g.Reshape(g.IndexSelect(table, 0, std::move(ids)), {b, w, d});
}

}  // namespace

ContextEmbeddings EncodeContext(ad::Graph& g, ad::Var table,
                                const std::vector<PromptLayout>& layouts,
                                std::int64_t model_dim) {
  CheckTable(g.shape(table), model_dim);
  if (layouts.empty()) throw PromptError("no layouts to encode");
  std::vector<std::vector<TokenId>> prefix, suffix;
  for (const auto& l : layouts) {
    if (!l.SameStructure(layouts.front())) {
      throw PromptError("layouts in one batch must share a structure");
    }
    prefix.push_back(l.PrefixTokens());
    suffix.push_back(l.SuffixTokens());
  }
  ContextEmbeddings out;
  if (!prefix.front().empty()) out.prefix = Lookup(g, table, prefix);
  out.suffix = Lookup(g, table, suffix);
  return out;
}

ad::Tensor EmbedContext(const PromptLayout& layout, const ad::Tensor& table,
                        std::int64_t model_dim) {
  CheckTable(table.shape(), model_dim);
  ad::Tensor out({layout.length(), model_dim});
  for (std::int64_t i = 0; i < layout.length(); ++i) {
    const auto& slot = layout.slots[i];
    if (slot.kind == SlotKind::kValue) continue;
    if (slot.token < 0 || slot.token >= table.dim(0)) {
      throw PromptError("token " + std::to_string(slot.token) + " outside the embedding table");
    }
    for (std::int64_t d = 0; d < model_dim; ++d) {
      out[i * model_dim + d] = table[slot.token * model_dim + d];
    }
  }
  return out;
}

}  // namespace langtime::prompt
