// Dialogue corpus ingestion and expansion into training examples.
#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kbrd/dialogue.hpp"
#include "kbrd/kg.hpp"
#include "kbrd/vocab.hpp"

namespace kbrd {

struct CorpusParseError : std::runtime_error {
  CorpusParseError(const std::string& file, std::size_t line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), line_number(line) {}
  std::size_t line_number;
};

struct CorpusStats {
  std::size_t dialogues = 0;
  std::size_t utterances = 0;
  std::size_t item_mentions = 0;
  bool operator==(const CorpusStats&) const = default;
};

struct RejectedLine {
  std::size_t line;
  std::string reason;
};

struct CorpusLoadResult {
  std::vector<Dialogue> dialogues;
  CorpusStats stats;
  std::vector<RejectedLine> rejected;
};

/// JSONL, one {"conversation_id", "turns": [{"speaker", "text", "items"}]}
/// object per line. Invalid JSON or a missing field throws CorpusParseError;
/// a dialogue with an unknown speaker tag is skipped and listed in `rejected`.
CorpusLoadResult load_corpus(const std::string& path);
CorpusLoadResult parse_corpus(const std::string& text, const std::string& source_name = "<memory>");

CorpusStats corpus_stats(const std::vector<Dialogue>& corpus);

std::string dialogue_to_json_line(const Dialogue& d);
void write_corpus(const std::string& path, const std::vector<Dialogue>& corpus);

struct TrainingExample {
  std::string conversation_id;
  std::size_t turn_index = 0;         // index of the target turn
  std::vector<Turn> history;          // every turn before the target
  std::vector<SymbolId> history_symbols;
  std::vector<SymbolId> target_symbols;  // target turn, end marker appended
  UserContext context;                // entities of `history` only
  std::optional<EntityId> gold_item;  // first item in the target not mentioned before
};

/// Speaker-marked history encoding: each turn contributes its marker and its
/// symbols. Keeps the most recent `max_len` symbols; an empty history encodes
/// as the start marker alone.
std::vector<SymbolId> encode_history(const std::vector<Turn>& history, const SymbolTable& symbols,
                                     const AliasLexicon& lexicon, std::size_t max_len);

/// Symbols of a response turn followed by the end marker.
std::vector<SymbolId> encode_target(const Turn& turn, const SymbolTable& symbols, const AliasLexicon& lexicon);

struct ExampleOptions {
  ContextOptions context;
  std::size_t max_history_len = 256;
};

/// One example per recommender turn.
std::vector<TrainingExample> build_examples(const std::vector<Dialogue>& corpus, const SymbolTable& symbols,
                                            const AliasLexicon& lexicon, const ExampleOptions& opts = {});

}  // namespace kbrd
