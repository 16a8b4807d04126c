// Transformer encoder-decoder with a user-conditioned vocabulary bias and a
// word/item switch.
//
// Decoder top layer:   P_dialog = softmax(o W^T + b + b_u),  b_u = F(t_u)
// Switch:              p_s = sigmoid(o w_s + b_s)
// Joint distribution:  [p_s * P_dialog ; (1 - p_s) * P_rec(items)]
#pragma once

#include <span>
#include <vector>

#include "kbrd/optim.hpp"
#include "kbrd/rng.hpp"
#include "kbrd/tensor.hpp"
#include "kbrd/vocab.hpp"

namespace kbrd {

struct TransformerConfig {
  std::size_t model_dim = 300;
  std::size_t num_layers = 2;
  std::size_t num_heads = 2;
  std::size_t ffn_dim = 1200;
  std::size_t max_seq_len = 256;
  double dropout = 0.1;

  void validate() const;
};

struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out, undefined for a bias-free map

  static Linear init(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);
  Tensor operator()(const Tensor& x) const { return bias.defined() ? add(matmul(x, weight), bias) : matmul(x, weight); }
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;

  static LayerNormParams init(std::size_t dim);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

struct MultiHeadAttention {
  Linear query, value, out;
  Linear key;  // no bias: a shared shift of the keys cannot change any softmax
  std::size_t heads = 1;

  static MultiHeadAttention init(std::size_t dim, std::size_t heads, Rng& rng);
  /// Attention of `q_in` rows over `kv_in` rows. With `causal`, row i only
  /// sees key rows j <= i.
  Tensor operator()(const Tensor& q_in, const Tensor& kv_in, bool causal) const;
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

struct FeedForward {
  Linear in, out;

  static FeedForward init(std::size_t dim, std::size_t hidden, Rng& rng);
  Tensor operator()(const Tensor& x) const { return out(relu(in(x))); }
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

struct EncoderLayer {
  MultiHeadAttention self_attn;
  LayerNormParams norm1;
  FeedForward ffn;
  LayerNormParams norm2;
};

struct DecoderLayer {
  MultiHeadAttention self_attn;
  LayerNormParams norm1;
  MultiHeadAttention cross_attn;
  LayerNormParams norm2;
  FeedForward ffn;
  LayerNormParams norm3;
};

/// F: t_u (1 x d_rec) -> b_u (1 x |V|), a single affine map.
struct VocabBiasNet {
  Tensor weight;  // d_rec x |V|
  Tensor bias;    // 1 x |V|
  Tensor operator()(const Tensor& user) const { return add(matmul(user, weight), bias); }
};

struct SwitchHead {
  Tensor weight;  // d x 1
  Tensor bias;    // 1 x 1
};

struct OutputLayer {
  Tensor weight;  // |V| x d
  Tensor bias;    // 1 x |V|
};

/// Sinusoidal position table rows [0, n).
Tensor positional_encoding(std::size_t n, std::size_t dim);

/// Additive causal mask: 0 on and below the diagonal, -inf above.
Tensor causal_mask(std::size_t n);

struct DialogRunOptions {
  bool training = false;
  Rng* rng = nullptr;  // dropout masks; required when training with dropout
};

class DialogTransformer {
 public:
  using RunOptions = DialogRunOptions;

  static DialogTransformer init(const TransformerConfig& cfg, std::size_t num_words, std::size_t num_items,
                                std::size_t user_dim, Rng& rng);

  const TransformerConfig& config() const { return cfg_; }
  std::size_t num_words() const { return output.weight.rows(); }
  std::size_t num_symbols() const { return embedding.rows(); }

  /// s = encoder(history). Inputs longer than max_seq_len keep the most recent
  /// tokens and print a warning.
  Tensor encode(std::span<const SymbolId> history, RunOptions run = {}) const;
  /// Decoder states for every prefix position (rows), causal.
  Tensor decode(std::span<const SymbolId> prefix, const Tensor& memory, RunOptions run = {}) const;
  /// o for the last prefix position (1 x d). Throws on an empty prefix.
  Tensor decode_step(std::span<const SymbolId> prefix, const Tensor& memory, RunOptions run = {}) const;

  Tensor vocabulary_bias(const Tensor& user) const { return bias_net(user); }
  /// o W^T + b (+ b_u when defined), one row per row of o.
  Tensor logits(const Tensor& o, const Tensor& user_bias) const;
  Tensor output_distribution(const Tensor& o, const Tensor& user_bias) const { return softmax(logits(o, user_bias)); }
  Tensor output_log_distribution(const Tensor& o, const Tensor& user_bias) const {
    return log_softmax(logits(o, user_bias));
  }
  Tensor switch_logit(const Tensor& o) const { return add(matmul(o, switch_head.weight), switch_head.bias); }
  Tensor switch_probability(const Tensor& o) const { return sigmoid(switch_logit(o)); }

  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;

  Tensor embedding;  // (|V| + |I|) x d, shared by encoder and decoder inputs
  std::vector<EncoderLayer> encoder;
  std::vector<DecoderLayer> decoder;
  OutputLayer output;
  VocabBiasNet bias_net;
  SwitchHead switch_head;

 private:
  Tensor embed(std::span<const SymbolId> ids, RunOptions run) const;
  Tensor maybe_dropout(const Tensor& x, RunOptions run) const;

  TransformerConfig cfg_;
};

/// [p_s * P_dialog ; (1 - p_s) * P_rec]. p_dialog is rows x |V|, p_rec_items
/// is 1 x |I| (or rows x |I|), p_switch is rows x 1.
Tensor mixed_distribution(const Tensor& p_dialog, const Tensor& p_rec_items, const Tensor& p_switch);

/// Log of mixed_distribution computed from log-probabilities and the switch
/// logit without forming the probabilities.
Tensor mixed_log_distribution(const Tensor& log_p_dialog, const Tensor& log_p_rec_items, const Tensor& switch_logit);

}  // namespace kbrd
