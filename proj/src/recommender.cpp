#include "kbrd/recommender.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "kbrd/init.hpp"

namespace kbrd {

AttentionPooler AttentionPooler::init(std::size_t dim, std::size_t attn_dim, Rng& rng) {
  if (attn_dim == 0) throw ConfigError("attention width must be positive");
  return {xavier(attn_dim, dim, rng), xavier(1, attn_dim, rng)};
}

void AttentionPooler::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
  out.push_back({prefix + ".W_a1", w_a1});
  out.push_back({prefix + ".w_a2", w_a2});
}

PooledUser attention_pool(const Tensor& h_user, const AttentionPooler& pooler) {
  if (h_user.rows() == 0) throw ContractViolation("attention_pool: empty entity set");
  if (h_user.cols() != pooler.dim())
    throw DimensionError("attention_pool: entity width " + std::to_string(h_user.cols()) + " != pooler width " +
                         std::to_string(pooler.dim()));
  Tensor hidden = tanh(matmul(pooler.w_a1, transpose(h_user)));  // d_a x n
  Tensor alpha = softmax(matmul(pooler.w_a2, hidden), -1);       // 1 x n
  return {matmul(alpha, h_user), alpha};
}

PooledUser user_representation(const UserContext& ctx, const Tensor& entity_reps, const AttentionPooler& pooler) {
  if (ctx.empty()) return {Tensor::zeros({1, entity_reps.cols()}), Tensor{}};
  return attention_pool(embedding_lookup(entity_reps, ctx.entity_ids), pooler);
}

Tensor item_mask_row(const KnowledgeGraph& graph) {
  std::vector<double> mask(graph.num_entities(), -std::numeric_limits<double>::infinity());
  for (EntityId v : graph.items()) mask[v] = 0.0;
  return Tensor::row(std::move(mask));
}

std::vector<RankedItem> rank_items(std::span<const double> scores, std::span<const double> probs,
                                   const KnowledgeGraph& graph) {
  std::vector<EntityId> order = graph.items();
  std::stable_sort(order.begin(), order.end(), [&](EntityId a, EntityId b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  std::vector<RankedItem> out;
  out.reserve(order.size());
  for (EntityId v : order) out.push_back({v, probs[v]});
  return out;
}

Recommendation recommend(const Tensor& user, const Tensor& entity_reps, const KnowledgeGraph& graph) {
  if (graph.items().empty()) throw ConfigError("recommend: item mask is empty");
  if (entity_reps.rows() != graph.num_entities())
    throw DimensionError("recommend: entity matrix has " + std::to_string(entity_reps.rows()) + " rows for " +
                         std::to_string(graph.num_entities()) + " entities");
  Recommendation rec;
  rec.scores = matmul(user, transpose(entity_reps));
  Tensor masked = add(rec.scores, item_mask_row(graph));
  rec.log_probs = log_softmax(masked, -1);
  rec.probs = softmax(masked, -1);
  rec.ranked_items = rank_items(rec.scores.data(), rec.probs.data(), graph);
  return rec;
}

Tensor recommendation_loss(const Recommendation& rec, EntityId gold, const KnowledgeGraph& graph) {
  if (gold >= graph.num_entities() || !graph.is_item(gold))
    throw ContractViolation("recommendation_loss: gold entity " + std::to_string(gold) + " is not an item");
  const std::size_t target = gold;
  return cross_entropy(rec.log_probs, std::span<const std::size_t>(&target, 1));
}

}  // namespace kbrd
