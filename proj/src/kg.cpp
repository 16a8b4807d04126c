#include "kbrd/kg.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <unordered_set>

#include "kbrd/tensor.hpp"
#include "kbrd/text.hpp"

namespace kbrd {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    out.push_back(trim(std::string_view(line).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

}  // namespace

// ---- KnowledgeGraph -------------------------------------------------------

KnowledgeGraph KnowledgeGraph::build(const std::vector<NamedTriple>& named, const std::vector<std::string>& item_names,
                                     GraphOptions opts, std::vector<std::string>* rejected_items) {
  KnowledgeGraph g;
  g.opts_ = opts;
  auto entity = [&](const std::string& name) {
    auto [it, fresh] = g.entity_index_.try_emplace(name, g.entity_names_.size());
    if (fresh) g.entity_names_.push_back(name);
    return it->second;
  };
  auto relation = [&](const std::string& name) {
    auto [it, fresh] = g.relation_index_.try_emplace(name, g.relation_names_.size());
    if (fresh) g.relation_names_.push_back(name);
    return it->second;
  };

  std::set<Triple> unique;
  std::vector<Triple> ordered;
  for (const auto& t : named) {
    const EntityId h = entity(t.head);
    const RelationId r = relation(t.relation);
    const EntityId w = entity(t.tail);
    if (unique.insert({h, r, w}).second) ordered.push_back({h, r, w});
  }
  g.triples_ = std::move(ordered);

  const std::size_t nrel = g.relation_names_.size();
  const std::size_t edge_types = opts.add_inverse_relations ? 2 * nrel : nrel;
  g.adjacency_.assign(edge_types, std::vector<std::vector<EntityId>>(g.entity_names_.size()));
  for (const auto& t : g.triples_) {
    g.adjacency_[t.relation][t.head].push_back(t.tail);
    if (opts.add_inverse_relations) g.adjacency_[t.relation + nrel][t.tail].push_back(t.head);
  }
  for (auto& per_rel : g.adjacency_)
    for (auto& nbrs : per_rel) std::sort(nbrs.begin(), nbrs.end());

  g.item_mask_.assign(g.entity_names_.size(), false);
  for (const auto& raw : item_names) {
    const std::string name = trim(raw);
    if (name.empty()) continue;
    auto it = g.entity_index_.find(name);
    if (it == g.entity_index_.end()) {
      if (rejected_items) rejected_items->push_back(name);
      continue;
    }
    g.item_mask_[it->second] = true;
  }
  g.item_pos_.assign(g.entity_names_.size(), -1);
  for (EntityId v = 0; v < g.entity_names_.size(); ++v)
    if (g.item_mask_[v]) {
      g.item_pos_[v] = static_cast<std::ptrdiff_t>(g.items_.size());
      g.items_.push_back(v);
    }
  if (g.items_.empty()) throw ConfigError("knowledge graph has no item entities");
  return g;
}

std::optional<EntityId> KnowledgeGraph::find_entity(std::string_view name) const {
  auto it = entity_index_.find(std::string(name));
  if (it == entity_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<RelationId> KnowledgeGraph::find_relation(std::string_view name) const {
  auto it = relation_index_.find(std::string(name));
  if (it == relation_index_.end()) return std::nullopt;
  return it->second;
}

std::size_t KnowledgeGraph::num_edges() const {
  std::size_t n = 0;
  for (const auto& per_rel : adjacency_)
    for (const auto& nbrs : per_rel) n += nbrs.size();
  return n;
}

std::optional<std::size_t> KnowledgeGraph::item_index(EntityId id) const {
  if (id >= item_pos_.size() || item_pos_[id] < 0) return std::nullopt;
  return static_cast<std::size_t>(item_pos_[id]);
}

KnowledgeGraph KnowledgeGraph::without_edges() const {
  KnowledgeGraph g = *this;
  g.triples_.clear();
  for (auto& per_rel : g.adjacency_)
    for (auto& nbrs : per_rel) nbrs.clear();
  return g;
}

std::vector<NamedTriple> read_triples(const std::string& path) {
  auto in = open_or_throw(path);
  std::vector<NamedTriple> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 3)
      throw GraphParseError(path, lineno, "expected 3 tab-separated fields, found " + std::to_string(fields.size()));
    if (fields[0].empty() || fields[1].empty() || fields[2].empty())
      throw GraphParseError(path, lineno, "empty field in triple");
    out.push_back({fields[0], fields[1], fields[2]});
  }
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  auto in = open_or_throw(path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

GraphLoadResult load_graph(const std::string& triples_path, const std::string& items_path, GraphOptions opts) {
  GraphLoadResult r;
  r.graph = KnowledgeGraph::build(read_triples(triples_path), read_lines(items_path), opts, &r.rejected_items);
  return r;
}

// ---- AliasLexicon ---------------------------------------------------------

bool AliasLexicon::add(std::string_view alias, EntityId entity) {
  auto toks = normalized_tokens(alias);
  if (toks.empty()) return false;
  auto [it, fresh] = aliases_.try_emplace(join(toks), entity);
  if (fresh) max_tokens_ = std::max(max_tokens_, toks.size());
  return fresh;
}

AliasLexicon AliasLexicon::from_entity_names(const KnowledgeGraph& graph) {
  AliasLexicon lex;
  for (EntityId v = 0; v < graph.num_entities(); ++v) lex.add(graph.entity_name(v), v);
  return lex;
}

std::optional<EntityId> AliasLexicon::lookup(std::string_view alias) const {
  auto it = aliases_.find(normalize(alias));
  if (it == aliases_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::pair<std::string, EntityId>> AliasLexicon::sorted_aliases() const {
  std::vector<std::pair<std::string, EntityId>> out(aliases_.begin(), aliases_.end());
  auto ntok = [](const std::string& s) { return std::count(s.begin(), s.end(), ' ') + 1; };
  std::stable_sort(out.begin(), out.end(), [&](const auto& a, const auto& b) { return ntok(a.first) > ntok(b.first); });
  return out;
}

std::vector<EntitySpan> AliasLexicon::link_spans(std::string_view text) const {
  return link_spans(normalized_tokens(text));
}

std::vector<EntitySpan> AliasLexicon::link_spans(const std::vector<std::string>& toks) const {
  std::vector<EntitySpan> out;
  std::size_t i = 0;
  while (i < toks.size()) {
    bool matched = false;
    const std::size_t longest = std::min(max_tokens_, toks.size() - i);
    for (std::size_t len = longest; len >= 1; --len) {
      std::string key = toks[i];
      for (std::size_t j = 1; j < len; ++j) (key += ' ') += toks[i + j];
      auto it = aliases_.find(key);
      if (it != aliases_.end()) {
        out.push_back({it->second, i, i + len});
        i += len;
        matched = true;
        break;
      }
    }
    if (!matched) ++i;
  }
  return out;
}

LexiconLoadResult load_lexicon(const std::string& path, const KnowledgeGraph& graph, bool include_entity_names) {
  LexiconLoadResult r;
  auto in = open_or_throw(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty())
      throw GraphParseError(path, lineno, "expected `alias<TAB>entity_name`");
    auto id = graph.find_entity(fields[1]);
    if (!id) {
      r.rejected.push_back(fields[0] + "\t" + fields[1] + " (unknown entity)");
      continue;
    }
    if (!r.lexicon.add(fields[0], *id)) r.rejected.push_back(fields[0] + "\t" + fields[1] + " (duplicate alias)");
  }
  if (include_entity_names)
    for (EntityId v = 0; v < graph.num_entities(); ++v) r.lexicon.add(graph.entity_name(v), v);
  return r;
}

std::vector<EntityId> link_entities(std::string_view text, const AliasLexicon& lexicon) {
  std::vector<EntityId> out;
  for (const auto& s : lexicon.link_spans(text)) out.push_back(s.entity);
  return out;
}

// ---- user context ---------------------------------------------------------

std::optional<EntityId> resolve_entity(std::string_view name, const KnowledgeGraph& graph, const AliasLexicon& lexicon) {
  if (auto id = graph.find_entity(name)) return id;
  return lexicon.lookup(name);
}

std::vector<EntityId> turn_entities(const Turn& turn, const AliasLexicon& lexicon, const KnowledgeGraph& graph,
                                    ContextOptions opts, std::vector<std::string>* unknown_items) {
  std::vector<EntityId> annotated;
  for (const auto& name : turn.items) {
    auto id = resolve_entity(name, graph, lexicon);
    if (!id) {
      if (unknown_items) unknown_items->push_back(name);
      continue;
    }
    annotated.push_back(*id);
  }
  auto is_annotated = [&](EntityId id) { return std::find(annotated.begin(), annotated.end(), id) != annotated.end(); };
  auto wanted = [&](EntityId id) { return graph.is_item(id) || opts.include_non_items; };

  std::vector<EntityId> out;
  for (const auto& span : lexicon.link_spans(turn.text)) {
    const EntityId id = span.entity;
    if (graph.is_item(id) ? is_annotated(id) : opts.include_non_items) out.push_back(id);
  }
  for (EntityId id : annotated)
    if (wanted(id) && std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
  return out;
}

UserContext make_user_context(const std::vector<EntityId>& ids, const KnowledgeGraph& graph) {
  UserContext ctx;
  std::unordered_set<EntityId> seen;
  for (EntityId id : ids) {
    if (id >= graph.num_entities()) throw IndexError("entity id " + std::to_string(id) + " out of range");
    if (!seen.insert(id).second) continue;
    ctx.entity_ids.push_back(id);
    if (graph.is_item(id))
      ++ctx.num_items;
    else
      ++ctx.num_non_items;
  }
  return ctx;
}

UserContext build_user_context(const std::vector<Turn>& history, const AliasLexicon& lexicon,
                               const KnowledgeGraph& graph, ContextOptions opts,
                               std::vector<std::string>* unknown_items) {
  std::vector<EntityId> ids;
  for (const auto& turn : history) {
    auto t = turn_entities(turn, lexicon, graph, opts, unknown_items);
    ids.insert(ids.end(), t.begin(), t.end());
  }
  return make_user_context(ids, graph);
}

}  // namespace kbrd
