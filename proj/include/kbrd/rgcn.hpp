// Relational graph convolution over the knowledge graph.
//
//   h_v' = relu( sum_r sum_{w in N_v^r} (1 / c_{v,r}) h_w W_r  +  h_v W_0 )
//
// Representations are rows, so the per-relation transforms are d_in x d_out
// matrices applied on the right.
#pragma once

#include <vector>

#include "kbrd/kg.hpp"
#include "kbrd/optim.hpp"
#include "kbrd/rng.hpp"
#include "kbrd/tensor.hpp"

namespace kbrd {

enum class RgcnNorm {
  constant_one,     // c_{v,r} = 1
  neighbor_count,   // c_{v,r} = |N_v^r|
};

struct RgcnLayer {
  std::vector<Tensor> relation_weights;  // one d_in x d_out matrix per edge type
  Tensor self_weight;                    // W_0, d_in x d_out

  static RgcnLayer init(std::size_t edge_types, std::size_t d_in, std::size_t d_out, Rng& rng);

  std::size_t in_dim() const { return self_weight.rows(); }
  std::size_t out_dim() const { return self_weight.cols(); }
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

struct RgcnOptions {
  RgcnNorm norm = RgcnNorm::constant_one;
  double dropout = 0.0;  // applied to layer inputs while training
};

Tensor rgcn_forward(const Tensor& h_prev, const KnowledgeGraph& graph, const RgcnLayer& layer,
                    const RgcnOptions& opts = {}, bool training = false, Rng* rng = nullptr);

/// Applies the layers in sequence. Throws ConfigError on a width mismatch.
Tensor encode_entities(const KnowledgeGraph& graph, const Tensor& h0, const std::vector<RgcnLayer>& layers,
                       const RgcnOptions& opts = {}, bool training = false, Rng* rng = nullptr);

}  // namespace kbrd
