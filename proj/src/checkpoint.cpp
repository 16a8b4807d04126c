#include "kbrd/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>

#include <json.hpp>

namespace kbrd {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'K', 'B', 'R', 'D', 'C', 'K', 'P', 'T'};
constexpr std::size_t kPrefixBytes = sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t);

template <typename T>
void put(std::vector<unsigned char>& out, T value) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

template <typename T>
T get(const std::vector<unsigned char>& in, std::size_t offset) {
  T value;
  std::memcpy(&value, in.data() + offset, sizeof(T));
  return value;
}

json graph_to_json(const KnowledgeGraph& g) {
  json triples = json::array();
  for (const auto& t : g.triples()) triples.push_back({t.head, t.relation, t.tail});
  json items = json::array();
  for (EntityId v : g.items()) items.push_back(g.entity_name(v));
  return {{"entities", g.entity_names()},
          {"relations", g.relation_names()},
          {"triples", triples},
          {"items", items},
          {"inverse_relations", g.has_inverse_relations()}};
}

KnowledgeGraph graph_from_json(const json& j) {
  const auto entities = j.at("entities").get<std::vector<std::string>>();
  const auto relations = j.at("relations").get<std::vector<std::string>>();
  std::vector<NamedTriple> named;
  for (const auto& t : j.at("triples")) {
    const auto h = t.at(0).get<std::size_t>(), r = t.at(1).get<std::size_t>(), w = t.at(2).get<std::size_t>();
    if (h >= entities.size() || w >= entities.size() || r >= relations.size())
      throw CheckpointIntegrityError("checkpoint graph has an out-of-range triple");
    named.push_back({entities[h], relations[r], entities[w]});
  }
  std::vector<std::string> rejected;
  KnowledgeGraph g = KnowledgeGraph::build(named, j.at("items").get<std::vector<std::string>>(),
                                           {.add_inverse_relations = j.at("inverse_relations").get<bool>()}, &rejected);
  if (!rejected.empty() || g.entity_names() != entities || g.relation_names() != relations)
    throw CheckpointIntegrityError("checkpoint graph does not rebuild to the stored entity order");
  return g;
}

json lexicon_to_json(const AliasLexicon& lex) {
  json out = json::array();
  for (const auto& [alias, id] : lex.sorted_aliases()) out.push_back({alias, id});
  return out;
}

AliasLexicon lexicon_from_json(const json& j) {
  AliasLexicon lex;
  for (const auto& e : j) lex.add(e.at(0).get<std::string>(), e.at(1).get<EntityId>());
  return lex;
}

}  // namespace

std::uint64_t fnv1a64(const unsigned char* data, std::size_t n, std::uint64_t h) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<unsigned char> serialize_checkpoint(const KbrdModel& model, const Adam* optimizer) {
  const auto params = model.all_params();
  json tensors = json::array();
  std::size_t payload_values = 0;
  for (const auto& p : params) {
    tensors.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
    payload_values += p.tensor.numel();
  }
  json header{{"format", "kbrd-checkpoint"},
              {"config", to_json(model.config())},
              {"vocab", model.symbols().vocab().words()},
              {"graph", graph_to_json(model.graph())},
              {"lexicon", lexicon_to_json(model.lexicon())},
              {"tensors", tensors},
              {"optimizer", nullptr}};
  if (optimizer) {
    json slots = json::array();
    for (const auto& s : optimizer->slots()) {
      slots.push_back(s.param.name);
      payload_values += 2 * s.m.size();
    }
    header["optimizer"] = {{"steps", optimizer->steps()}, {"slots", slots}};
  }
  header["payload_values"] = payload_values;
  const std::string text = header.dump();

  std::vector<unsigned char> out(kMagic, kMagic + sizeof(kMagic));
  out.reserve(kPrefixBytes + text.size() + 8 * payload_values + 8);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& p : params)
    for (double x : p.tensor.data()) put(out, x);
  if (optimizer)
    for (const auto& s : optimizer->slots()) {
      for (double x : s.m) put(out, x);
      for (double x : s.v) put(out, x);
    }
  put<std::uint64_t>(out, fnv1a64(out.data(), out.size()));
  return out;
}

LoadedCheckpoint deserialize_checkpoint(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < kPrefixBytes + 8) throw CheckpointIntegrityError("checkpoint truncated: file too short");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointIntegrityError("not a checkpoint: bad magic bytes");
  const auto version = get<std::uint32_t>(bytes, sizeof(kMagic));
  if (version != kCheckpointVersion)
    throw CheckpointVersionError("checkpoint format version " + std::to_string(version) +
                                 " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  const auto header_len = get<std::uint64_t>(bytes, sizeof(kMagic) + 4);
  if (header_len > bytes.size() - kPrefixBytes - 8) throw CheckpointIntegrityError("checkpoint truncated in header");

  json header;
  try {
    header = json::parse(bytes.begin() + kPrefixBytes, bytes.begin() + static_cast<std::ptrdiff_t>(kPrefixBytes + header_len));
  } catch (const json::parse_error& e) {
    throw CheckpointIntegrityError(std::string("checkpoint header is corrupt: ") + e.what());
  }
  const std::size_t payload_values = header.at("payload_values").get<std::size_t>();
  const std::size_t expected = kPrefixBytes + header_len + 8 * payload_values + 8;
  if (bytes.size() != expected)
    throw CheckpointIntegrityError("checkpoint length " + std::to_string(bytes.size()) + " does not match expected " +
                                   std::to_string(expected));
  const auto stored = get<std::uint64_t>(bytes, bytes.size() - 8);
  if (stored != fnv1a64(bytes.data(), bytes.size() - 8)) throw CheckpointIntegrityError("checkpoint checksum mismatch");

  LoadedCheckpoint out;
  out.checksum = stored;
  try {
    const ModelConfig cfg = model_config_from_json(header.at("config"));
    KnowledgeGraph graph = graph_from_json(header.at("graph"));
    Vocabulary vocab(header.at("vocab").get<std::vector<std::string>>());
    out.model = KbrdModel::create(cfg, std::move(graph), lexicon_from_json(header.at("lexicon")), std::move(vocab), 0);
  } catch (const json::exception& e) {
    throw CheckpointIntegrityError(std::string("checkpoint header is malformed: ") + e.what());
  }

  std::size_t offset = kPrefixBytes + header_len;
  auto read_into = [&](std::span<double> dst) {
    for (double& x : dst) {
      x = get<double>(bytes, offset);
      offset += 8;
    }
  };
  auto params = out.model.all_params();
  const json& tensors = header.at("tensors");
  if (tensors.size() != params.size()) throw CheckpointIntegrityError("checkpoint parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (tensors[i].at("name").get<std::string>() != params[i].name ||
        tensors[i].at("shape").get<Shape>() != params[i].tensor.shape())
      throw CheckpointIntegrityError("checkpoint tensor '" + tensors[i].at("name").get<std::string>() +
                                     "' does not match the model layout");
    read_into(params[i].tensor.mutable_data());
  }
  if (const json& o = header.at("optimizer"); !o.is_null()) {
    OptimizerState st;
    st.steps = o.at("steps").get<std::uint64_t>();
    st.names = o.at("slots").get<std::vector<std::string>>();
    for (const auto& name : st.names) {
      auto it = std::find_if(params.begin(), params.end(), [&](const NamedParam& p) { return p.name == name; });
      if (it == params.end()) throw CheckpointIntegrityError("optimizer slot for unknown parameter '" + name + "'");
      std::vector<double> m(it->tensor.numel()), v(it->tensor.numel());
      read_into(m);
      read_into(v);
      st.m.push_back(std::move(m));
      st.v.push_back(std::move(v));
    }
    out.optimizer = std::move(st);
  }
  return out;
}

void save_checkpoint(const std::string& path, const KbrdModel& model, const Adam* optimizer) {
  const auto bytes = serialize_checkpoint(model, optimizer);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing checkpoint: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

void restore_optimizer(Adam& optimizer, const OptimizerState& state) {
  auto& slots = optimizer.slots();
  if (slots.size() != state.names.size()) throw ConfigError("optimizer state does not match the optimizer layout");
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].param.name != state.names[i] || slots[i].m.size() != state.m[i].size())
      throw ConfigError("optimizer state slot '" + state.names[i] + "' does not match");
    slots[i].m = state.m[i];
    slots[i].v = state.v[i];
  }
  optimizer.set_steps(state.steps);
}

}  // namespace kbrd
