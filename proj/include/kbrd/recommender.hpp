// Entity self-attention pooling and masked item recommendation.
#pragma once

#include <utility>
#include <vector>

#include "kbrd/kg.hpp"
#include "kbrd/optim.hpp"
#include "kbrd/rng.hpp"
#include "kbrd/tensor.hpp"

namespace kbrd {

/// alpha = softmax(w_a2 tanh(W_a1 H_u^T)),  t_u = alpha H_u
struct AttentionPooler {
  Tensor w_a1;  // d_a x d
  Tensor w_a2;  // 1 x d_a

  static AttentionPooler init(std::size_t dim, std::size_t attn_dim, Rng& rng);
  std::size_t dim() const { return w_a1.cols(); }
  std::size_t attn_dim() const { return w_a1.rows(); }
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

struct PooledUser {
  Tensor user;       // t_u, 1 x d
  Tensor attention;  // alpha_u, 1 x |T_u| (undefined for an empty context)
};

/// Requires at least one row in `h_user`.
PooledUser attention_pool(const Tensor& h_user, const AttentionPooler& pooler);

/// Gathers the context rows of H and pools them. An empty context yields a
/// zero vector, which makes every item score equal.
PooledUser user_representation(const UserContext& ctx, const Tensor& entity_reps, const AttentionPooler& pooler);

struct RankedItem {
  EntityId entity;
  double prob;
};

struct Recommendation {
  Tensor scores;     // 1 x |E|, t_u H^T
  Tensor log_probs;  // 1 x |E|, -inf on non-items
  Tensor probs;      // 1 x |E|, exactly 0 on non-items
  std::vector<RankedItem> ranked_items;  // descending, ties by ascending id
};

/// -inf on non-items, 0 on items; 1 x |E|.
Tensor item_mask_row(const KnowledgeGraph& graph);

Recommendation recommend(const Tensor& user, const Tensor& entity_reps, const KnowledgeGraph& graph);

/// Items sorted by score, descending; equal scores by ascending entity id.
std::vector<RankedItem> rank_items(std::span<const double> scores, std::span<const double> probs,
                                   const KnowledgeGraph& graph);

/// -log P_rec(gold); throws ContractViolation when gold is not an item.
Tensor recommendation_loss(const Recommendation& rec, EntityId gold, const KnowledgeGraph& graph);

}  // namespace kbrd
