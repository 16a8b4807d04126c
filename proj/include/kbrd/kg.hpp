// Knowledge graph storage, alias lexicon and user entity-set extraction.
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kbrd/dialogue.hpp"
#include "kbrd/errors.hpp"

namespace kbrd {

using EntityId = std::size_t;
using RelationId = std::size_t;

struct GraphParseError : std::runtime_error {
  GraphParseError(const std::string& file, std::size_t line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), line_number(line) {}
  std::size_t line_number;
};

struct Triple {
  EntityId head;
  RelationId relation;
  EntityId tail;
  auto operator<=>(const Triple&) const = default;
};

struct NamedTriple {
  std::string head, relation, tail;
};

struct GraphOptions {
  /// Adds a reversed copy of every relation so messages also flow tail -> head.
  bool add_inverse_relations = true;
};

/// Entities, relations, deduplicated triples, relation-indexed adjacency and
/// the item mask. Immutable after construction.
///
/// Adjacency follows the message direction: for a triple (h, r, t) the tail
/// t is a neighbour of h under r. With inverse relations enabled, h is also a
/// neighbour of t under the inverse of r, whose id is r + num_relations().
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  /// Builds the graph. Item names that are not entities are returned through
  /// `rejected_items`; an empty resulting item set is a ConfigError.
  static KnowledgeGraph build(const std::vector<NamedTriple>& triples, const std::vector<std::string>& item_names,
                              GraphOptions opts = {}, std::vector<std::string>* rejected_items = nullptr);

  std::size_t num_entities() const { return entity_names_.size(); }
  /// Relations as loaded (without inverses).
  std::size_t num_relations() const { return relation_names_.size(); }
  /// Relation slots used for propagation (doubled when inverses are on).
  std::size_t num_edge_types() const { return adjacency_.size(); }
  bool has_inverse_relations() const { return opts_.add_inverse_relations; }
  const GraphOptions& options() const { return opts_; }

  const std::string& entity_name(EntityId id) const { return entity_names_.at(id); }
  const std::vector<std::string>& entity_names() const { return entity_names_; }
  const std::string& relation_name(RelationId id) const { return relation_names_.at(id); }
  const std::vector<std::string>& relation_names() const { return relation_names_; }
  std::optional<EntityId> find_entity(std::string_view name) const;
  std::optional<RelationId> find_relation(std::string_view name) const;

  /// N_v^r over edge types.
  const std::vector<EntityId>& neighbors(EntityId v, std::size_t edge_type) const {
    return adjacency_.at(edge_type).at(v);
  }
  /// N_v^r for every v under one edge type.
  const std::vector<std::vector<EntityId>>& neighbor_lists(std::size_t edge_type) const {
    return adjacency_.at(edge_type);
  }
  const std::vector<Triple>& triples() const { return triples_; }
  std::size_t num_edges() const;

  bool is_item(EntityId id) const { return item_mask_.at(id); }
  const std::vector<bool>& item_mask() const { return item_mask_; }
  /// Item entity ids in ascending order.
  const std::vector<EntityId>& items() const { return items_; }
  /// Position of an item within items(), if it is one.
  std::optional<std::size_t> item_index(EntityId id) const;

  /// Same entities and items, no edges. Used by variants without propagation.
  KnowledgeGraph without_edges() const;

 private:
  GraphOptions opts_;
  std::vector<std::string> entity_names_;
  std::unordered_map<std::string, EntityId> entity_index_;
  std::vector<std::string> relation_names_;
  std::unordered_map<std::string, RelationId> relation_index_;
  std::vector<Triple> triples_;
  std::vector<std::vector<std::vector<EntityId>>> adjacency_;  // [edge_type][v] -> neighbours
  std::vector<bool> item_mask_;
  std::vector<EntityId> items_;
  std::vector<std::ptrdiff_t> item_pos_;
};

struct GraphLoadResult {
  KnowledgeGraph graph;
  std::vector<std::string> rejected_items;
};

/// Triples TSV (`head<TAB>relation<TAB>tail`) plus an items file with one
/// entity name per line.
GraphLoadResult load_graph(const std::string& triples_path, const std::string& items_path, GraphOptions opts = {});

std::vector<NamedTriple> read_triples(const std::string& path);
std::vector<std::string> read_lines(const std::string& path);

/// A linked mention: entity plus the half-open token range it covers.
struct EntitySpan {
  EntityId entity;
  std::size_t begin;
  std::size_t end;
};

/// Normalized alias -> entity map used as a deterministic entity linker.
class AliasLexicon {
 public:
  AliasLexicon() = default;

  /// Adds an alias; returns false when the normalized alias is empty or
  /// already mapped (first mapping wins).
  bool add(std::string_view alias, EntityId entity);

  /// Every entity's own name as an alias.
  static AliasLexicon from_entity_names(const KnowledgeGraph& graph);

  std::size_t size() const { return aliases_.size(); }
  bool empty() const { return aliases_.empty(); }
  std::optional<EntityId> lookup(std::string_view alias) const;
  std::size_t max_alias_tokens() const { return max_tokens_; }
  /// Aliases sorted by descending token length, then lexicographically.
  std::vector<std::pair<std::string, EntityId>> sorted_aliases() const;

  /// Greedy longest-match, left-to-right, non-overlapping scan.
  std::vector<EntitySpan> link_spans(std::string_view text) const;
  std::vector<EntitySpan> link_spans(const std::vector<std::string>& normalized) const;

 private:
  std::map<std::string, EntityId> aliases_;
  std::size_t max_tokens_ = 0;
};

struct LexiconLoadResult {
  AliasLexicon lexicon;
  std::vector<std::string> rejected;  // lines naming unknown entities or duplicate aliases
};

/// TSV `alias<TAB>entity_name`. Entity names are added as aliases after the
/// file entries unless include_entity_names is false.
LexiconLoadResult load_lexicon(const std::string& path, const KnowledgeGraph& graph, bool include_entity_names = true);

std::vector<EntityId> link_entities(std::string_view text, const AliasLexicon& lexicon);

/// The ordered, deduplicated entity set of a user.
struct UserContext {
  std::vector<EntityId> entity_ids;
  std::size_t num_items = 0;
  std::size_t num_non_items = 0;

  bool empty() const { return entity_ids.empty(); }
  bool operator==(const UserContext&) const = default;
};

struct ContextOptions {
  /// When false only item mentions enter the context (items-only variants).
  bool include_non_items = true;
};

/// Resolves an annotated item name: exact entity name first, then the
/// lexicon on the normalized name.
std::optional<EntityId> resolve_entity(std::string_view name, const KnowledgeGraph& graph, const AliasLexicon& lexicon);

/// Entities mentioned by one turn in mention order: annotated items plus
/// linked non-item entities. Linked items that were not annotated are ignored;
/// annotated items not found in the text follow the linked ones.
std::vector<EntityId> turn_entities(const Turn& turn, const AliasLexicon& lexicon, const KnowledgeGraph& graph,
                                    ContextOptions opts = {}, std::vector<std::string>* unknown_items = nullptr);

UserContext build_user_context(const std::vector<Turn>& history, const AliasLexicon& lexicon,
                               const KnowledgeGraph& graph, ContextOptions opts = {},
                               std::vector<std::string>* unknown_items = nullptr);

/// Context built from explicit entity ids (deduplicated, order preserved).
UserContext make_user_context(const std::vector<EntityId>& ids, const KnowledgeGraph& graph);

}  // namespace kbrd
