// Small generated worlds (graph, aliases, dialogues) used by the demo fixture
// and by the end-to-end experiments.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kbrd/dialogue.hpp"
#include "kbrd/kg.hpp"
#include "kbrd/model.hpp"
#include "kbrd/train.hpp"

namespace kbrd {

struct SyntheticWorld {
  std::vector<NamedTriple> triples;
  std::vector<std::string> items;
  std::vector<std::pair<std::string, std::string>> aliases;  // alias, entity name
  std::vector<Dialogue> train;
  std::vector<Dialogue> test;

  KnowledgeGraph graph(GraphOptions opts = {}) const;
  AliasLexicon lexicon(const KnowledgeGraph& graph) const;
};

/// 16 movies indexed by (genre, actor) plus directors and countries; 50
/// templated six-turn dialogues in which the user names a genre and an actor
/// and the recommender answers with the matching movie.
SyntheticWorld overfit_world();

struct AblationWorldOptions {
  std::size_t genres = 15;
  std::size_t items_per_genre = 20;
  std::size_t actors_per_genre = 8;
  std::size_t train_dialogues = 600;
  std::size_t test_dialogues = 300;
  std::size_t max_liked = 2;
};

/// Many items grouped by genre. Each dialogue names a genre in words and
/// mentions 0..max_liked liked items of that genre; the recommender answers
/// with another item of the same genre.
SyntheticWorld ablation_world(std::uint64_t seed, const AblationWorldOptions& opts = {});

enum class Variant { items_only, dialog_only, kg_only, full };

const char* variant_name(Variant v);
/// Applies the variant's switches: dialog entities and graph propagation.
ModelConfig apply_variant(ModelConfig cfg, Variant v);

/// Small transformer and entity widths that memorize overfit_world() quickly.
TrainConfig overfit_train_config();
/// Recommender-only training used to compare variants on ablation_world().
TrainConfig ablation_train_config();

/// Writes kg.tsv, items.txt, aliases.tsv, train.jsonl and test.jsonl.
void write_world(const std::string& dir, const SyntheticWorld& world);

}  // namespace kbrd
