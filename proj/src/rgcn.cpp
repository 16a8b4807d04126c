#include "kbrd/rgcn.hpp"

#include "kbrd/init.hpp"

namespace kbrd {

RgcnLayer RgcnLayer::init(std::size_t edge_types, std::size_t d_in, std::size_t d_out, Rng& rng) {
  RgcnLayer l;
  for (std::size_t r = 0; r < edge_types; ++r) l.relation_weights.push_back(xavier(d_in, d_out, rng));
  l.self_weight = xavier(d_in, d_out, rng);
  return l;
}

void RgcnLayer::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
  for (std::size_t r = 0; r < relation_weights.size(); ++r)
    out.push_back({prefix + ".W_rel" + std::to_string(r), relation_weights[r]});
  out.push_back({prefix + ".W_self", self_weight});
}

Tensor rgcn_forward(const Tensor& h_prev, const KnowledgeGraph& graph, const RgcnLayer& layer, const RgcnOptions& opts,
                    bool training, Rng* rng) {
  if (h_prev.rows() != graph.num_entities())
    throw DimensionError("rgcn_forward: " + std::to_string(h_prev.rows()) + " rows for " +
                         std::to_string(graph.num_entities()) + " entities");
  if (layer.relation_weights.size() != graph.num_edge_types())
    throw ConfigError("rgcn_forward: layer has " + std::to_string(layer.relation_weights.size()) +
                      " relation weights, graph has " + std::to_string(graph.num_edge_types()) + " edge types");
  if (h_prev.cols() != layer.in_dim())
    throw ConfigError("rgcn_forward: input width " + std::to_string(h_prev.cols()) + " != layer input width " +
                      std::to_string(layer.in_dim()));

  Tensor h = h_prev;
  if (training && opts.dropout > 0.0 && rng) h = dropout(h, opts.dropout, true, *rng);

  // Aggregate neighbour rows per relation first, then apply all transforms
  // with one product: [agg_1 | ... | agg_R | h] * [W_1; ...; W_R; W_0].
  std::vector<Tensor> blocks;
  std::vector<Tensor> weights;
  const bool average = opts.norm == RgcnNorm::neighbor_count;
  for (std::size_t r = 0; r < graph.num_edge_types(); ++r) {
    const auto& lists = graph.neighbor_lists(r);
    bool any = false;
    for (const auto& l : lists) any = any || !l.empty();
    if (!any) continue;
    blocks.push_back(neighbor_sum(h, lists, average));
    weights.push_back(layer.relation_weights[r]);
  }
  blocks.push_back(h);
  weights.push_back(layer.self_weight);
  return relu(matmul(concat_cols(blocks), concat_rows(weights)));
}

Tensor encode_entities(const KnowledgeGraph& graph, const Tensor& h0, const std::vector<RgcnLayer>& layers,
                       const RgcnOptions& opts, bool training, Rng* rng) {
  if (layers.empty()) throw ConfigError("encode_entities: at least one R-GCN layer is required");
  for (std::size_t i = 1; i < layers.size(); ++i)
    if (layers[i].in_dim() != layers[i - 1].out_dim())
      throw ConfigError("encode_entities: layer " + std::to_string(i) + " expects width " +
                        std::to_string(layers[i].in_dim()) + " but previous layer emits " +
                        std::to_string(layers[i - 1].out_dim()));
  Tensor h = h0;
  for (const auto& layer : layers) h = rgcn_forward(h, graph, layer, opts, training, rng);
  return h;
}

}  // namespace kbrd
