#include "kbrd/dialog.hpp"

#include <cmath>
#include <iostream>
#include <limits>

#include "kbrd/init.hpp"

namespace kbrd {

void TransformerConfig::validate() const {
  if (model_dim == 0 || num_heads == 0 || model_dim % num_heads != 0)
    throw ConfigError("transformer: model_dim (" + std::to_string(model_dim) + ") must be divisible by num_heads (" +
                      std::to_string(num_heads) + ")");
  if (num_layers == 0) throw ConfigError("transformer: num_layers must be positive");
  if (ffn_dim == 0) throw ConfigError("transformer: ffn_dim must be positive");
  if (max_seq_len == 0) throw ConfigError("transformer: max_seq_len must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("transformer: dropout must lie in [0, 1)");
}

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng, bool with_bias) {
  Tensor w = xavier(in, out, rng);
  return {w, with_bias ? zeros_param(1, out) : Tensor()};
}

void Linear::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

LayerNormParams LayerNormParams::init(std::size_t dim) { return {ones_param(1, dim), zeros_param(1, dim)}; }

void LayerNormParams::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
  out.push_back({prefix + ".gain", gain});
  out.push_back({prefix + ".bias", bias});
}

MultiHeadAttention MultiHeadAttention::init(std::size_t dim, std::size_t heads, Rng& rng) {
  MultiHeadAttention m;
  m.query = Linear::init(dim, dim, rng);
  m.key = Linear::init(dim, dim, rng, false);
  m.value = Linear::init(dim, dim, rng);
  m.out = Linear::init(dim, dim, rng);
  m.heads = heads;
  return m;
}

Tensor causal_mask(std::size_t n) {
  std::vector<double> m(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m[i * n + j] = -std::numeric_limits<double>::infinity();
  return Tensor::from({n, n}, std::move(m));
}

Tensor MultiHeadAttention::operator()(const Tensor& q_in, const Tensor& kv_in, bool causal) const {
  const std::size_t dim = query.weight.cols();
  const std::size_t head_dim = dim / heads;
  Tensor q = query(q_in);
  Tensor k = key(kv_in);
  Tensor v = value(kv_in);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Tensor mask;
  if (causal) {
    if (q_in.rows() != kv_in.rows()) throw DimensionError("causal attention needs equal query/key lengths");
    mask = causal_mask(q_in.rows());
  }
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * head_dim, head_dim);
    Tensor kh = slice_cols(k, h * head_dim, head_dim);
    Tensor vh = slice_cols(v, h * head_dim, head_dim);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    if (causal) scores = add(scores, mask);
    outs.push_back(matmul(softmax(scores, -1), vh));
  }
  return out(heads == 1 ? outs.front() : concat_cols(outs));
}

void MultiHeadAttention::collect(const std::string& prefix, std::vector<NamedParam>& out_params) const {
  query.collect(prefix + ".q", out_params);
  key.collect(prefix + ".k", out_params);
  value.collect(prefix + ".v", out_params);
  out.collect(prefix + ".o", out_params);
}

FeedForward FeedForward::init(std::size_t dim, std::size_t hidden, Rng& rng) {
  return {Linear::init(dim, hidden, rng), Linear::init(hidden, dim, rng)};
}

void FeedForward::collect(const std::string& prefix, std::vector<NamedParam>& out_params) const {
  in.collect(prefix + ".in", out_params);
  out.collect(prefix + ".out", out_params);
}

Tensor positional_encoding(std::size_t n, std::size_t dim) {
  std::vector<double> pe(n * dim);
  for (std::size_t pos = 0; pos < n; ++pos)
    for (std::size_t i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      pe[pos * dim + i] = (i % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
    }
  return Tensor::from({n, dim}, std::move(pe));
}

DialogTransformer DialogTransformer::init(const TransformerConfig& cfg, std::size_t num_words, std::size_t num_items,
                                          std::size_t user_dim, Rng& rng) {
  cfg.validate();
  const std::size_t d = cfg.model_dim;
  DialogTransformer t;
  t.cfg_ = cfg;
  t.embedding = normal_init(num_words + num_items, d, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  for (std::size_t l = 0; l < cfg.num_layers; ++l)
    t.encoder.push_back({MultiHeadAttention::init(d, cfg.num_heads, rng), LayerNormParams::init(d),
                         FeedForward::init(d, cfg.ffn_dim, rng), LayerNormParams::init(d)});
  for (std::size_t l = 0; l < cfg.num_layers; ++l)
    t.decoder.push_back({MultiHeadAttention::init(d, cfg.num_heads, rng), LayerNormParams::init(d),
                         MultiHeadAttention::init(d, cfg.num_heads, rng), LayerNormParams::init(d),
                         FeedForward::init(d, cfg.ffn_dim, rng), LayerNormParams::init(d)});
  t.output = {xavier(num_words, d, rng), zeros_param(1, num_words)};
  t.bias_net = {xavier(user_dim, num_words, rng), zeros_param(1, num_words)};
  t.switch_head = {xavier(d, 1, rng), zeros_param(1, 1)};
  return t;
}

Tensor DialogTransformer::maybe_dropout(const Tensor& x, RunOptions run) const {
  if (!run.training || cfg_.dropout <= 0.0 || !run.rng) return x;
  return dropout(x, cfg_.dropout, true, *run.rng);
}

Tensor DialogTransformer::embed(std::span<const SymbolId> ids, RunOptions run) const {
  const std::size_t d = cfg_.model_dim;
  Tensor x = scale(embedding_lookup(embedding, ids), std::sqrt(static_cast<double>(d)));
  return maybe_dropout(add(x, positional_encoding(ids.size(), d)), run);
}

Tensor DialogTransformer::encode(std::span<const SymbolId> history, RunOptions run) const {
  if (history.empty()) throw ContractViolation("encode: empty history");
  if (history.size() > cfg_.max_seq_len) {
    std::cerr << "warning: history of " << history.size() << " tokens truncated to the last " << cfg_.max_seq_len
              << '\n';
    history = history.subspan(history.size() - cfg_.max_seq_len);
  }
  Tensor x = embed(history, run);
  for (const auto& layer : encoder) {
    x = layer.norm1(add(x, maybe_dropout(layer.self_attn(x, x, false), run)));
    x = layer.norm2(add(x, maybe_dropout(layer.ffn(x), run)));
  }
  return x;
}

Tensor DialogTransformer::decode(std::span<const SymbolId> prefix, const Tensor& memory, RunOptions run) const {
  if (prefix.empty()) throw ContractViolation("decode: empty prefix");
  Tensor x = embed(prefix, run);
  for (const auto& layer : decoder) {
    x = layer.norm1(add(x, maybe_dropout(layer.self_attn(x, x, true), run)));
    x = layer.norm2(add(x, maybe_dropout(layer.cross_attn(x, memory, false), run)));
    x = layer.norm3(add(x, maybe_dropout(layer.ffn(x), run)));
  }
  return x;
}

Tensor DialogTransformer::decode_step(std::span<const SymbolId> prefix, const Tensor& memory, RunOptions run) const {
  Tensor states = decode(prefix, memory, run);
  return slice_rows(states, states.rows() - 1, 1);
}

Tensor DialogTransformer::logits(const Tensor& o, const Tensor& user_bias) const {
  Tensor z = add(matmul(o, transpose(output.weight)), output.bias);
  return user_bias.defined() ? add(z, user_bias) : z;
}

void DialogTransformer::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
  out.push_back({prefix + ".embedding", embedding});
  for (std::size_t l = 0; l < encoder.size(); ++l) {
    const std::string p = prefix + ".enc" + std::to_string(l);
    encoder[l].self_attn.collect(p + ".self", out);
    encoder[l].norm1.collect(p + ".norm1", out);
    encoder[l].ffn.collect(p + ".ffn", out);
    encoder[l].norm2.collect(p + ".norm2", out);
  }
  for (std::size_t l = 0; l < decoder.size(); ++l) {
    const std::string p = prefix + ".dec" + std::to_string(l);
    decoder[l].self_attn.collect(p + ".self", out);
    decoder[l].norm1.collect(p + ".norm1", out);
    decoder[l].cross_attn.collect(p + ".cross", out);
    decoder[l].norm2.collect(p + ".norm2", out);
    decoder[l].ffn.collect(p + ".ffn", out);
    decoder[l].norm3.collect(p + ".norm3", out);
  }
  out.push_back({prefix + ".out.W", output.weight});
  out.push_back({prefix + ".out.b", output.bias});
  out.push_back({prefix + ".vocab_bias.W", bias_net.weight});
  out.push_back({prefix + ".vocab_bias.b", bias_net.bias});
  out.push_back({prefix + ".switch.w", switch_head.weight});
  out.push_back({prefix + ".switch.b", switch_head.bias});
}

Tensor mixed_distribution(const Tensor& p_dialog, const Tensor& p_rec_items, const Tensor& p_switch) {
  Tensor words = mul(p_dialog, p_switch);
  Tensor items = mul(p_rec_items, add_scalar(neg(p_switch), 1.0));
  return concat_cols({words, items});
}

Tensor mixed_log_distribution(const Tensor& log_p_dialog, const Tensor& log_p_rec_items, const Tensor& switch_logit) {
  Tensor words = add(log_p_dialog, log_sigmoid(switch_logit));
  Tensor items = add(log_p_rec_items, log_sigmoid(neg(switch_logit)));
  return concat_cols({words, items});
}

}  // namespace kbrd
