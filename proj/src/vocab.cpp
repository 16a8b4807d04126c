#include "kbrd/vocab.hpp"

#include <algorithm>
#include <map>

#include "kbrd/errors.hpp"
#include "kbrd/text.hpp"

namespace kbrd {

const std::vector<std::string>& Vocabulary::reserved_words() {
  static const std::vector<std::string> words{"__pad__", "__unk__", "__start__", "__end__", "__user__", "__rec__"};
  return words;
}

Vocabulary::Vocabulary() {
  for (const auto& w : reserved_words()) add(w);
}

Vocabulary::Vocabulary(std::vector<std::string> words) {
  const auto& reserved = reserved_words();
  if (words.size() < reserved.size() || !std::equal(reserved.begin(), reserved.end(), words.begin()))
    throw ConfigError("vocabulary must begin with the reserved symbols");
  for (const auto& w : words) {
    if (contains(w)) throw ConfigError("duplicate vocabulary entry '" + w + "'");
    add(w);
  }
}

SymbolId Vocabulary::id(const std::string& w) const {
  auto it = index_.find(w);
  return it == index_.end() ? kUnk : it->second;
}

SymbolId Vocabulary::add(const std::string& w) {
  auto [it, fresh] = index_.try_emplace(w, words_.size());
  if (fresh) words_.push_back(w);
  return it->second;
}

SymbolId SymbolTable::item_symbol(EntityId item) const {
  auto idx = graph_->item_index(item);
  if (!idx) throw ContractViolation("entity " + std::to_string(item) + " is not an item");
  return num_words() + *idx;
}

std::string SymbolTable::render(SymbolId s) const {
  if (s >= num_symbols()) throw IndexError("symbol " + std::to_string(s) + " out of range");
  if (is_item_symbol(s)) return graph_->entity_name(item_entity(s));
  return vocab_.word(s);
}

std::string SymbolTable::render(const std::vector<SymbolId>& symbols, bool stop_at_eos) const {
  std::vector<std::string> parts;
  for (SymbolId s : symbols) {
    if (stop_at_eos && s == Vocabulary::kEos) break;
    if (s == Vocabulary::kSos || s == Vocabulary::kPad) continue;
    parts.push_back(render(s));
  }
  return join(parts);
}

std::vector<SymbolTable::Piece> SymbolTable::segment(const Turn& turn, const AliasLexicon& lexicon) const {
  const auto raw = tokenize(turn.text);
  std::vector<std::size_t> raw_of_norm;
  std::vector<std::string> norm;
  for (std::size_t i = 0; i < raw.size(); ++i)
    if (!is_punctuation_token(raw[i])) {
      raw_of_norm.push_back(i);
      norm.push_back(raw[i]);
    }

  std::vector<EntityId> annotated;
  for (const auto& name : turn.items)
    if (auto id = resolve_entity(name, *graph_, lexicon); id && graph_->is_item(*id)) annotated.push_back(*id);

  // raw index -> (end raw index, item) for each substituted mention
  std::map<std::size_t, std::pair<std::size_t, EntityId>> mentions;
  for (const auto& span : lexicon.link_spans(norm)) {
    if (!graph_->is_item(span.entity)) continue;
    if (std::find(annotated.begin(), annotated.end(), span.entity) == annotated.end()) continue;
    const std::size_t b = raw_of_norm[span.begin];
    std::size_t e = raw_of_norm[span.end - 1] + 1;
    // "Name (1999)" links on "name 1999"; swallow the closing bracket too.
    const bool open = std::count(raw.begin() + b, raw.begin() + e, "(") > std::count(raw.begin() + b, raw.begin() + e, ")");
    if (open && e < raw.size() && raw[e] == ")") ++e;
    mentions[b] = {e, span.entity};
  }

  std::vector<Piece> out;
  for (std::size_t i = 0; i < raw.size();) {
    if (auto it = mentions.find(i); it != mentions.end()) {
      out.push_back({{}, it->second.second});
      i = it->second.first;
    } else {
      out.push_back({raw[i], std::nullopt});
      ++i;
    }
  }
  return out;
}

std::vector<SymbolId> SymbolTable::symbolize(const Turn& turn, const AliasLexicon& lexicon) const {
  std::vector<SymbolId> out;
  for (const auto& p : segment(turn, lexicon)) out.push_back(p.item ? item_symbol(*p.item) : vocab_.id(p.word));
  return out;
}

Vocabulary build_vocabulary(const std::vector<Dialogue>& corpus, const KnowledgeGraph& graph,
                            const AliasLexicon& lexicon, std::size_t min_count) {
  SymbolTable seg(Vocabulary{}, std::shared_ptr<const KnowledgeGraph>(&graph, [](const KnowledgeGraph*) {}));
  std::map<std::string, std::size_t> counts;
  for (const auto& d : corpus)
    for (const auto& t : d.turns)
      for (const auto& p : seg.segment(t, lexicon))
        if (!p.item) ++counts[p.word];
  std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (const auto& [w, c] : ordered)
    if (c >= min_count && !v.contains(w)) v.add(w);
  return v;
}

}  // namespace kbrd
