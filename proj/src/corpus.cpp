#include "kbrd/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace kbrd {

using nlohmann::json;

namespace {

const json& require(const json& obj, const char* key, json::value_t type, const std::string& file, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw CorpusParseError(file, line, std::string("missing field '") + key + "'");
  const bool ok = it->type() == type || (type == json::value_t::number_unsigned && it->is_number_integer());
  if (!ok) throw CorpusParseError(file, line, std::string("field '") + key + "' has type " + it->type_name());
  return *it;
}

}  // namespace

CorpusLoadResult parse_corpus(const std::string& text, const std::string& source_name) {
  CorpusLoadResult out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw CorpusParseError(source_name, lineno, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw CorpusParseError(source_name, lineno, "expected a JSON object");

    Dialogue d;
    const json& id = obj.contains("conversation_id") ? obj["conversation_id"] : json();
    if (id.is_string())
      d.conversation_id = id.get<std::string>();
    else if (id.is_number_integer())
      d.conversation_id = std::to_string(id.get<long long>());
    else
      throw CorpusParseError(source_name, lineno, "missing or non-string 'conversation_id'");

    const json& turns = require(obj, "turns", json::value_t::array, source_name, lineno);
    std::string rejection;
    for (const auto& t : turns) {
      if (!t.is_object()) throw CorpusParseError(source_name, lineno, "turn is not an object");
      const auto& speaker = require(t, "speaker", json::value_t::string, source_name, lineno);
      auto sp = parse_speaker(speaker.get<std::string>());
      if (!sp) {
        rejection = "unknown speaker '" + speaker.get<std::string>() + "'";
        break;
      }
      Turn turn;
      turn.speaker = *sp;
      turn.text = require(t, "text", json::value_t::string, source_name, lineno).get<std::string>();
      if (auto it = t.find("items"); it != t.end()) {
        if (!it->is_array()) throw CorpusParseError(source_name, lineno, "'items' is not an array");
        for (const auto& item : *it) {
          if (!item.is_string()) throw CorpusParseError(source_name, lineno, "item name is not a string");
          turn.items.push_back(item.get<std::string>());
        }
      }
      d.turns.push_back(std::move(turn));
    }
    if (rejection.empty() && d.turns.empty()) rejection = "dialogue has no turns";
    if (!rejection.empty()) {
      out.rejected.push_back({lineno, rejection});
      continue;
    }
    out.dialogues.push_back(std::move(d));
  }
  out.stats = corpus_stats(out.dialogues);
  return out;
}

CorpusLoadResult load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_corpus(buf.str(), path);
}

CorpusStats corpus_stats(const std::vector<Dialogue>& corpus) {
  CorpusStats s;
  s.dialogues = corpus.size();
  for (const auto& d : corpus) {
    s.utterances += d.turns.size();
    for (const auto& t : d.turns) s.item_mentions += t.items.size();
  }
  return s;
}

std::string dialogue_to_json_line(const Dialogue& d) {
  json turns = json::array();
  for (const auto& t : d.turns)
    turns.push_back({{"speaker", std::string(to_string(t.speaker))}, {"text", t.text}, {"items", t.items}});
  return json{{"conversation_id", d.conversation_id}, {"turns", turns}}.dump();
}

void write_corpus(const std::string& path, const std::vector<Dialogue>& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);
  for (const auto& d : corpus) out << dialogue_to_json_line(d) << '\n';
}

std::vector<SymbolId> encode_history(const std::vector<Turn>& history, const SymbolTable& symbols,
                                     const AliasLexicon& lexicon, std::size_t max_len) {
  std::vector<SymbolId> out;
  for (const auto& t : history) {
    out.push_back(t.speaker == Speaker::user ? Vocabulary::kUserMark : Vocabulary::kRecMark);
    auto s = symbols.symbolize(t, lexicon);
    out.insert(out.end(), s.begin(), s.end());
  }
  if (out.empty()) return {Vocabulary::kSos};
  if (max_len > 0 && out.size() > max_len) out.erase(out.begin(), out.end() - static_cast<std::ptrdiff_t>(max_len));
  return out;
}

std::vector<SymbolId> encode_target(const Turn& turn, const SymbolTable& symbols, const AliasLexicon& lexicon) {
  auto out = symbols.symbolize(turn, lexicon);
  out.push_back(Vocabulary::kEos);
  return out;
}

std::vector<TrainingExample> build_examples(const std::vector<Dialogue>& corpus, const SymbolTable& symbols,
                                            const AliasLexicon& lexicon, const ExampleOptions& opts) {
  const KnowledgeGraph& graph = symbols.graph();
  std::vector<TrainingExample> out;
  for (const auto& d : corpus) {
    std::set<EntityId> seen_items;
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
      const Turn& turn = d.turns[i];
      if (turn.speaker == Speaker::recommender) {
        TrainingExample ex;
        ex.conversation_id = d.conversation_id;
        ex.turn_index = i;
        ex.history.assign(d.turns.begin(), d.turns.begin() + static_cast<std::ptrdiff_t>(i));
        ex.history_symbols = encode_history(ex.history, symbols, lexicon, opts.max_history_len);
        ex.target_symbols = encode_target(turn, symbols, lexicon);
        ex.context = build_user_context(ex.history, lexicon, graph, opts.context);
        for (EntityId e : turn_entities(turn, lexicon, graph, {.include_non_items = false}))
          if (graph.is_item(e) && !seen_items.count(e)) {
            ex.gold_item = e;
            break;
          }
        out.push_back(std::move(ex));
      }
      for (EntityId e : turn_entities(turn, lexicon, graph, {.include_non_items = false}))
        if (graph.is_item(e)) seen_items.insert(e);
    }
  }
  return out;
}

}  // namespace kbrd
