#include "kbrd/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "kbrd/init.hpp"

namespace kbrd {

using nlohmann::json;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::string norm_name(RgcnNorm n) { return n == RgcnNorm::constant_one ? "constant_one" : "neighbor_count"; }

RgcnNorm parse_norm(const std::string& s) {
  if (s == "constant_one") return RgcnNorm::constant_one;
  if (s == "neighbor_count") return RgcnNorm::neighbor_count;
  throw ConfigError("unknown rgcn_norm '" + s + "'");
}

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
  }
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ConfigError("unknown " + where + " key '" + it.key() + "'");
}

}  // namespace

void ModelConfig::validate() const {
  if (entity_dim == 0) throw ConfigError("entity_dim must be positive");
  if (rgcn_layers == 0) throw ConfigError("rgcn_layers must be at least 1");
  if (rgcn_dropout < 0.0 || rgcn_dropout >= 1.0) throw ConfigError("rgcn_dropout must lie in [0, 1)");
  if (max_response_len == 0) throw ConfigError("max_response_len must be positive");
  transformer.validate();
}

json to_json(const ModelConfig& c) {
  return json{{"entity_dim", c.entity_dim},
              {"rgcn_layers", c.rgcn_layers},
              {"rgcn_norm", norm_name(c.rgcn_norm)},
              {"rgcn_dropout", c.rgcn_dropout},
              {"attn_dim", c.attn_dim},
              {"transformer",
               {{"model_dim", c.transformer.model_dim},
                {"num_layers", c.transformer.num_layers},
                {"num_heads", c.transformer.num_heads},
                {"ffn_dim", c.transformer.ffn_dim},
                {"max_seq_len", c.transformer.max_seq_len},
                {"dropout", c.transformer.dropout}}},
              {"use_kg", c.use_kg},
              {"use_dialog_entities", c.use_dialog_entities},
              {"use_switch", c.use_switch},
              {"use_vocab_bias", c.use_vocab_bias},
              {"add_inverse_relations", c.add_inverse_relations},
              {"max_response_len", c.max_response_len}};
}

ModelConfig model_config_from_json(const json& j, ModelConfig c) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  reject_unknown(j,
                 {"entity_dim", "rgcn_layers", "rgcn_norm", "rgcn_dropout", "attn_dim", "transformer", "use_kg",
                  "use_dialog_entities", "use_switch", "use_vocab_bias", "add_inverse_relations", "max_response_len"},
                 "model");
  read_key(j, "entity_dim", c.entity_dim);
  read_key(j, "rgcn_layers", c.rgcn_layers);
  if (auto it = j.find("rgcn_norm"); it != j.end()) c.rgcn_norm = parse_norm(it->get<std::string>());
  read_key(j, "rgcn_dropout", c.rgcn_dropout);
  read_key(j, "attn_dim", c.attn_dim);
  if (auto it = j.find("transformer"); it != j.end()) {
    reject_unknown(*it, {"model_dim", "num_layers", "num_heads", "ffn_dim", "max_seq_len", "dropout"}, "transformer");
    read_key(*it, "model_dim", c.transformer.model_dim);
    read_key(*it, "num_layers", c.transformer.num_layers);
    read_key(*it, "num_heads", c.transformer.num_heads);
    read_key(*it, "ffn_dim", c.transformer.ffn_dim);
    read_key(*it, "max_seq_len", c.transformer.max_seq_len);
    read_key(*it, "dropout", c.transformer.dropout);
  }
  read_key(j, "use_kg", c.use_kg);
  read_key(j, "use_dialog_entities", c.use_dialog_entities);
  read_key(j, "use_switch", c.use_switch);
  read_key(j, "use_vocab_bias", c.use_vocab_bias);
  read_key(j, "add_inverse_relations", c.add_inverse_relations);
  read_key(j, "max_response_len", c.max_response_len);
  c.validate();
  return c;
}

void KbrdModel::set_graph(KnowledgeGraph graph, AliasLexicon lexicon, Vocabulary vocab) {
  graph_ = std::make_shared<const KnowledgeGraph>(std::move(graph));
  prop_graph_ = cfg_.use_kg ? graph_ : std::make_shared<const KnowledgeGraph>(graph_->without_edges());
  lexicon_ = std::move(lexicon);
  symbols_ = SymbolTable(std::move(vocab), graph_);
}

KbrdModel KbrdModel::create(const ModelConfig& cfg, KnowledgeGraph graph, AliasLexicon lexicon, Vocabulary vocab,
                            std::uint64_t seed) {
  cfg.validate();
  if (graph.has_inverse_relations() != cfg.add_inverse_relations)
    throw ConfigError("graph inverse-relation setting does not match the model config");
  KbrdModel m;
  m.cfg_ = cfg;
  m.set_graph(std::move(graph), std::move(lexicon), std::move(vocab));
  Rng rng(seed);
  const std::size_t d = cfg.entity_dim;
  m.entity_embeddings = xavier(m.graph_->num_entities(), d, rng);
  for (std::size_t l = 0; l < cfg.rgcn_layers; ++l)
    m.rgcn.push_back(RgcnLayer::init(m.prop_graph_->num_edge_types(), d, d, rng));
  m.pooler = AttentionPooler::init(d, cfg.attention_width(), rng);
  m.dialog = DialogTransformer::init(cfg.transformer, m.symbols_.num_words(), m.symbols_.num_items(), d, rng);
  return m;
}

UserContext KbrdModel::context_for(const std::vector<Turn>& history) const {
  return build_user_context(history, lexicon_, *graph_, context_options());
}

std::vector<SymbolId> KbrdModel::history_symbols(const std::vector<Turn>& history) const {
  return encode_history(history, symbols_, lexicon_, cfg_.transformer.max_seq_len);
}

Tensor KbrdModel::entity_representations(bool training, Rng* rng) const {
  return encode_entities(*prop_graph_, entity_embeddings, rgcn, {cfg_.rgcn_norm, cfg_.rgcn_dropout}, training, rng);
}

PooledUser KbrdModel::user_vector(const UserContext& ctx, const Tensor& entity_reps) const {
  return user_representation(ctx, entity_reps, pooler);
}

Recommendation KbrdModel::recommend(const UserContext& ctx, const Tensor& entity_reps) const {
  return kbrd::recommend(user_vector(ctx, entity_reps).user, entity_reps, *graph_);
}

Recommendation KbrdModel::recommend(const UserContext& ctx) const {
  NoGradGuard no_grad;
  return recommend(ctx, entity_representations());
}

Tensor KbrdModel::item_log_probs(const Recommendation& rec) const {
  return transpose(embedding_lookup(transpose(rec.log_probs), graph_->items()));
}

Tensor KbrdModel::dialog_bias(const Tensor& user) const {
  return cfg_.use_vocab_bias ? dialog.vocabulary_bias(user) : Tensor{};
}

ExampleLoss KbrdModel::example_loss(const TrainingExample& ex, const Tensor& entity_reps, bool with_dialog,
                                    bool training, Rng* rng) const {
  ExampleLoss out;
  const PooledUser pu = user_vector(ex.context, entity_reps);
  const Recommendation rec = kbrd::recommend(pu.user, entity_reps, *graph_);
  if (ex.gold_item) out.rec_loss = recommendation_loss(rec, *ex.gold_item, *graph_);
  if (!with_dialog) return out;

  const DialogTransformer::RunOptions run{training, rng};
  const Tensor memory = dialog.encode(ex.history_symbols, run);
  std::vector<SymbolId> input{Vocabulary::kSos};
  input.insert(input.end(), ex.target_symbols.begin(), ex.target_symbols.end() - 1);
  const Tensor o = dialog.decode(input, memory, run);
  const Tensor log_words = dialog.output_log_distribution(o, dialog_bias(pu.user));

  if (cfg_.use_switch) {
    const Tensor joint = mixed_log_distribution(log_words, item_log_probs(rec), dialog.switch_logit(o));
    out.dialog_tokens = ex.target_symbols.size();
    out.dialog_nll = scale(cross_entropy(joint, ex.target_symbols), static_cast<double>(out.dialog_tokens));
    return out;
  }
  std::vector<std::size_t> rows, targets;
  for (std::size_t t = 0; t < ex.target_symbols.size(); ++t)
    if (!symbols_.is_item_symbol(ex.target_symbols[t])) {
      rows.push_back(t);
      targets.push_back(ex.target_symbols[t]);
    }
  if (rows.empty()) return out;
  out.dialog_tokens = rows.size();
  out.dialog_nll =
      scale(cross_entropy(embedding_lookup(log_words, rows), targets), static_cast<double>(out.dialog_tokens));
  return out;
}

std::vector<double> KbrdModel::word_log_probs(const TrainingExample& ex, const Tensor& entity_reps) const {
  NoGradGuard no_grad;
  const PooledUser pu = user_vector(ex.context, entity_reps);
  const Tensor memory = dialog.encode(ex.history_symbols);
  std::vector<SymbolId> input{Vocabulary::kSos};
  input.insert(input.end(), ex.target_symbols.begin(), ex.target_symbols.end() - 1);
  const Tensor log_words = dialog.output_log_distribution(dialog.decode(input, memory), dialog_bias(pu.user));
  std::vector<double> out;
  for (std::size_t t = 0; t < ex.target_symbols.size(); ++t) {
    const SymbolId s = ex.target_symbols[t];
    if (!symbols_.is_item_symbol(s)) out.push_back(log_words.at(t, s));
  }
  return out;
}

Response KbrdModel::generate(const std::vector<Turn>& history) const {
  return generate(history, {.max_len = cfg_.max_response_len, .beam = 1});
}

Response KbrdModel::generate(const std::vector<Turn>& history, const GenerateOptions& opts) const {
  if (opts.beam < 1 || opts.beam > 5) throw ConfigError("beam width must be between 1 and 5");
  NoGradGuard no_grad;
  const Tensor reps = entity_representations();
  const PooledUser pu = user_vector(context_for(history), reps);
  const Recommendation rec = kbrd::recommend(pu.user, reps, *graph_);
  const Tensor memory = dialog.encode(history_symbols(history));
  const Tensor bias = dialog_bias(pu.user);
  const Tensor item_lp = cfg_.use_switch ? item_log_probs(rec) : Tensor{};

  auto step = [&](const std::vector<SymbolId>& prefix) {
    const Tensor o = dialog.decode_step(prefix, memory);
    const Tensor lw = dialog.output_log_distribution(o, bias);
    std::vector<double> lp =
        cfg_.use_switch ? mixed_log_distribution(lw, item_lp, dialog.switch_logit(o)).to_vector() : lw.to_vector();
    for (SymbolId banned : {Vocabulary::kPad, Vocabulary::kSos, Vocabulary::kUserMark, Vocabulary::kRecMark})
      lp[banned] = kNegInf;
    return lp;
  };

  struct Hyp {
    std::vector<SymbolId> prefix;  // starts with the start marker
    double score = 0.0;
  };
  std::vector<Hyp> live{{{Vocabulary::kSos}, 0.0}};
  std::vector<Hyp> finished;
  for (std::size_t t = 0; t < opts.max_len && !live.empty(); ++t) {
    std::vector<Hyp> candidates;
    for (const auto& h : live) {
      const auto lp = step(h.prefix);
      std::vector<SymbolId> order(lp.size());
      std::iota(order.begin(), order.end(), 0);
      const std::size_t k = std::min(opts.beam, order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                        [&](SymbolId a, SymbolId b) { return lp[a] != lp[b] ? lp[a] > lp[b] : a < b; });
      for (std::size_t i = 0; i < k; ++i) {
        if (lp[order[i]] == kNegInf) break;
        Hyp next = h;
        next.prefix.push_back(order[i]);
        next.score += lp[order[i]];
        candidates.push_back(std::move(next));
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(), [](const Hyp& a, const Hyp& b) { return a.score > b.score; });
    live.clear();
    for (auto& c : candidates) {
      if (live.size() >= opts.beam) break;
      if (c.prefix.back() == Vocabulary::kEos)
        finished.push_back(std::move(c));
      else
        live.push_back(std::move(c));
    }
    // Scores only decrease, so a finished hypothesis that beats every live one is final.
    const auto best_done = std::max_element(finished.begin(), finished.end(),
                                            [](const Hyp& a, const Hyp& b) { return a.score < b.score; });
    if (best_done != finished.end() && (live.empty() || best_done->score >= live.front().score)) break;
  }
  std::vector<Hyp> pool = finished.empty() ? live : finished;
  if (pool.empty()) pool.push_back({{Vocabulary::kSos}, 0.0});
  const Hyp& best = *std::max_element(pool.begin(), pool.end(), [](const Hyp& a, const Hyp& b) { return a.score < b.score; });

  Response r;
  for (std::size_t i = 1; i < best.prefix.size(); ++i) {
    const SymbolId s = best.prefix[i];
    if (s == Vocabulary::kEos) break;
    r.symbols.push_back(s);
    if (symbols_.is_item_symbol(s)) r.emitted_items.push_back(symbols_.item_entity(s));
  }
  r.text = symbols_.render(r.symbols);
  return r;
}

std::vector<double> KbrdModel::vocabulary_bias(const UserContext& ctx) const {
  if (!cfg_.use_vocab_bias) return std::vector<double>(symbols_.num_words(), 0.0);
  NoGradGuard no_grad;
  return dialog.vocabulary_bias(user_vector(ctx, entity_representations()).user).to_vector();
}

std::vector<NamedParam> KbrdModel::recommender_params() const {
  std::vector<NamedParam> out{{"entity.H0", entity_embeddings}};
  for (std::size_t l = 0; l < rgcn.size(); ++l) rgcn[l].collect("rgcn.l" + std::to_string(l), out);
  pooler.collect("attention", out);
  return out;
}

std::vector<NamedParam> KbrdModel::dialog_params() const {
  std::vector<NamedParam> out;
  dialog.collect("dialog", out);
  return out;
}

std::vector<NamedParam> KbrdModel::all_params() const {
  auto out = recommender_params();
  auto d = dialog_params();
  out.insert(out.end(), d.begin(), d.end());
  return out;
}

KbrdModel make_model(const ModelConfig& cfg, KnowledgeGraph graph, AliasLexicon lexicon,
                     const std::vector<Dialogue>& corpus, std::size_t min_word_count, std::uint64_t seed) {
  Vocabulary vocab = build_vocabulary(corpus, graph, lexicon, min_word_count);
  return KbrdModel::create(cfg, std::move(graph), std::move(lexicon), std::move(vocab), seed);
}

}  // namespace kbrd
