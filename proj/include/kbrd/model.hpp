// The joint model: knowledge-graph recommender plus recommendation-aware
// dialog generator sharing the user representation.
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kbrd/corpus.hpp"
#include "kbrd/dialog.hpp"
#include "kbrd/kg.hpp"
#include "kbrd/recommender.hpp"
#include "kbrd/rgcn.hpp"
#include "kbrd/vocab.hpp"

namespace kbrd {

struct ModelConfig {
  std::size_t entity_dim = 128;
  std::size_t rgcn_layers = 1;
  RgcnNorm rgcn_norm = RgcnNorm::constant_one;
  double rgcn_dropout = 0.0;
  std::size_t attn_dim = 0;  // 0 means entity_dim
  TransformerConfig transformer;
  bool use_kg = true;               // propagate over graph edges
  bool use_dialog_entities = true;  // non-item entities enter the user context
  bool use_switch = true;           // word/item switch; otherwise words only
  bool use_vocab_bias = true;
  bool add_inverse_relations = true;
  std::size_t max_response_len = 30;

  void validate() const;
  std::size_t attention_width() const { return attn_dim ? attn_dim : entity_dim; }
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

struct GenerateOptions {
  std::size_t max_len = 30;
  std::size_t beam = 1;  // 1 is greedy; at most 5
};

struct Response {
  std::vector<SymbolId> symbols;  // without the end marker
  std::vector<EntityId> emitted_items;
  std::string text;
};

struct ExampleLoss {
  Tensor dialog_nll;             // summed over scored target symbols; undefined when skipped
  std::size_t dialog_tokens = 0;
  Tensor rec_loss;               // undefined without a gold item
};

class KbrdModel {
 public:
  KbrdModel() = default;

  /// Fresh parameters. The lexicon should already contain every entity name.
  static KbrdModel create(const ModelConfig& cfg, KnowledgeGraph graph, AliasLexicon lexicon, Vocabulary vocab,
                          std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const KnowledgeGraph& graph() const { return *graph_; }
  const KnowledgeGraph& propagation_graph() const { return *prop_graph_; }
  const AliasLexicon& lexicon() const { return lexicon_; }
  const SymbolTable& symbols() const { return symbols_; }
  ContextOptions context_options() const { return {.include_non_items = cfg_.use_dialog_entities}; }
  ExampleOptions example_options() const {
    return {.context = context_options(), .max_history_len = cfg_.transformer.max_seq_len};
  }

  UserContext context_for(const std::vector<Turn>& history) const;
  std::vector<SymbolId> history_symbols(const std::vector<Turn>& history) const;

  /// H: final-layer representation of every entity.
  Tensor entity_representations(bool training = false, Rng* rng = nullptr) const;
  PooledUser user_vector(const UserContext& ctx, const Tensor& entity_reps) const;
  Recommendation recommend(const UserContext& ctx, const Tensor& entity_reps) const;
  Recommendation recommend(const UserContext& ctx) const;
  /// log P_rec restricted to items, 1 x |I| in symbol order.
  Tensor item_log_probs(const Recommendation& rec) const;

  /// Loss terms for one example. `entity_reps` is shared across a batch.
  ExampleLoss example_loss(const TrainingExample& ex, const Tensor& entity_reps, bool with_dialog,
                           bool training = false, Rng* rng = nullptr) const;

  /// log P_dialog of every word target symbol of `ex` (items skipped).
  std::vector<double> word_log_probs(const TrainingExample& ex, const Tensor& entity_reps) const;

  Response generate(const std::vector<Turn>& history, const GenerateOptions& opts) const;
  Response generate(const std::vector<Turn>& history) const;

  /// b_u for a context, 1 x |V|. Zero when the bias is disabled.
  std::vector<double> vocabulary_bias(const UserContext& ctx) const;

  std::vector<NamedParam> recommender_params() const;
  std::vector<NamedParam> dialog_params() const;
  std::vector<NamedParam> all_params() const;

  Tensor entity_embeddings;  // H0, |E| x d
  std::vector<RgcnLayer> rgcn;
  AttentionPooler pooler;
  DialogTransformer dialog;

 private:
  void set_graph(KnowledgeGraph graph, AliasLexicon lexicon, Vocabulary vocab);
  Tensor dialog_bias(const Tensor& user) const;

  ModelConfig cfg_;
  std::shared_ptr<const KnowledgeGraph> graph_;
  std::shared_ptr<const KnowledgeGraph> prop_graph_;
  AliasLexicon lexicon_;
  SymbolTable symbols_;
};

/// Builds the vocabulary from `corpus` and creates a fresh model.
KbrdModel make_model(const ModelConfig& cfg, KnowledgeGraph graph, AliasLexicon lexicon,
                     const std::vector<Dialogue>& corpus, std::size_t min_word_count, std::uint64_t seed);

}  // namespace kbrd
