// Word vocabulary and the joint word/item symbol space.
//
// Symbols [0, |V|) are words; symbols [|V|, |V| + |I|) are items, in the
// ascending-entity-id order of KnowledgeGraph::items().
#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "kbrd/dialogue.hpp"
#include "kbrd/kg.hpp"

namespace kbrd {

using SymbolId = std::size_t;

class Vocabulary {
 public:
  static constexpr SymbolId kPad = 0;
  static constexpr SymbolId kUnk = 1;
  static constexpr SymbolId kSos = 2;
  static constexpr SymbolId kEos = 3;
  static constexpr SymbolId kUserMark = 4;
  static constexpr SymbolId kRecMark = 5;
  static constexpr std::size_t kNumReserved = 6;

  Vocabulary();
  explicit Vocabulary(std::vector<std::string> words);  // must start with the reserved symbols

  std::size_t size() const { return words_.size(); }
  const std::string& word(SymbolId id) const { return words_.at(id); }
  const std::vector<std::string>& words() const { return words_; }
  SymbolId id(const std::string& w) const;  // kUnk when absent
  bool contains(const std::string& w) const { return index_.count(w) != 0; }
  SymbolId add(const std::string& w);
  static bool is_reserved(SymbolId id) { return id < kNumReserved; }
  static const std::vector<std::string>& reserved_words();

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, SymbolId> index_;
};

/// Maps between surface text and the joint symbol space.
class SymbolTable {
 public:
  SymbolTable() = default;
  SymbolTable(Vocabulary vocab, std::shared_ptr<const KnowledgeGraph> graph)
      : vocab_(std::move(vocab)), graph_(std::move(graph)) {}

  const Vocabulary& vocab() const { return vocab_; }
  std::size_t num_words() const { return vocab_.size(); }
  std::size_t num_items() const { return graph_->items().size(); }
  std::size_t num_symbols() const { return num_words() + num_items(); }

  bool is_item_symbol(SymbolId s) const { return s >= num_words(); }
  SymbolId item_symbol(EntityId item) const;
  EntityId item_entity(SymbolId s) const { return graph_->items().at(s - num_words()); }
  /// Word text, or the item's entity name.
  std::string render(SymbolId s) const;
  std::string render(const std::vector<SymbolId>& symbols, bool stop_at_eos = true) const;

  /// Tokens of a turn with mentions of its annotated items replaced by item
  /// symbols. Speaker markers are not included.
  std::vector<SymbolId> symbolize(const Turn& turn, const AliasLexicon& lexicon) const;
  /// Raw tokens of a turn, item mentions collapsed into single entries
  /// carrying the item id (used when building the vocabulary).
  struct Piece {
    std::string word;
    std::optional<EntityId> item;
  };
  std::vector<Piece> segment(const Turn& turn, const AliasLexicon& lexicon) const;

  const KnowledgeGraph& graph() const { return *graph_; }

 private:
  Vocabulary vocab_;
  std::shared_ptr<const KnowledgeGraph> graph_;
};

/// Word vocabulary over every turn of the corpus (item mentions excluded).
Vocabulary build_vocabulary(const std::vector<Dialogue>& corpus, const KnowledgeGraph& graph,
                            const AliasLexicon& lexicon, std::size_t min_count = 1);

}  // namespace kbrd
