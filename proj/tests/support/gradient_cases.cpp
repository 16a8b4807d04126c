#include "gradient_cases.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kbrd/dialog.hpp"
#include "kbrd/recommender.hpp"

namespace kbrd::testing {

namespace {

using Params = std::vector<NamedParam>;

std::size_t dim(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); }

// Second operand for broadcasting binary ops: same shape, a row, a column or
// a single cell.
Tensor broadcast_partner(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  switch (rng.index(4)) {
    case 0: return random_tensor({r, c}, rng, lo, hi);
    case 1: return random_tensor({1, c}, rng, lo, hi);
    case 2: return random_tensor({r, 1}, rng, lo, hi);
    default: return random_tensor({1, 1}, rng, lo, hi);
  }
}

GradCase unary(std::string name, std::function<Tensor(const Tensor&)> op, double lo = -2.0, double hi = 2.0,
               std::size_t min_rows = 1, std::size_t min_cols = 1) {
  return {name, [=](std::uint64_t seed) {
            Rng rng(seed);
            Tensor x = random_tensor({dim(rng, min_rows, 4), dim(rng, min_cols, 5)}, rng, lo, hi);
            return grad_check([&] { return random_projection(op(x), seed); }, {{"x", x}});
          }};
}

GradCase binary(std::string name, std::function<Tensor(const Tensor&, const Tensor&)> op) {
  return {name, [op](std::uint64_t seed) {
            Rng rng(seed);
            const std::size_t r = dim(rng, 1, 4), c = dim(rng, 1, 5);
            Tensor a = random_tensor({r, c}, rng);
            Tensor b = broadcast_partner(r, c, rng);
            if (rng.bernoulli(0.5)) std::swap(a, b);
            return grad_check([&] { return random_projection(op(a, b), seed); }, {{"a", a}, {"b", b}});
          }};
}

// Random additive mask with -inf entries. Slices along `axis` need length 2+.
Tensor random_mask(std::size_t r, std::size_t c, int axis, Rng& rng) {
  std::vector<double> m(r * c, 0.0);
  const double ninf = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      if (rng.bernoulli(0.3)) m[i * c + j] = ninf;
  // two distinct finite entries per slice
  if (axis == 0) {
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t a = rng.index(r);
      m[a * c + j] = 0.0;
      m[((a + 1 + rng.index(r - 1)) % r) * c + j] = 0.0;
    }
  } else {
    for (std::size_t i = 0; i < r; ++i) {
      const std::size_t a = rng.index(c);
      m[i * c + a] = 0.0;
      m[i * c + (a + 1 + rng.index(c - 1)) % c] = 0.0;
    }
  }
  return Tensor::from({r, c}, std::move(m));
}

GradCase softmax_case(int axis, bool masked) {
  return {std::string("softmax axis=") + std::to_string(axis) + (masked ? " masked" : ""), [axis, masked](std::uint64_t seed) {
            Rng rng(seed);
            // at least two entries along the normalized axis, else the gradient is 0
            const std::size_t r = dim(rng, axis == 0 ? 2 : 1, 4), c = dim(rng, axis == 0 ? 1 : 2, 5);
            Tensor x = random_tensor({r, c}, rng, -3.0, 3.0);
            Tensor mask = masked ? random_mask(r, c, axis, rng) : Tensor::zeros({r, c});
            return grad_check([&] { return random_projection(softmax(add(x, mask), axis), seed); }, {{"x", x}});
          }};
}

GradCase log_softmax_case(int axis, bool masked) {
  return {std::string("log_softmax axis=") + std::to_string(axis) + (masked ? " masked" : ""),
          [axis, masked](std::uint64_t seed) {
            Rng rng(seed);
            // at least two entries along the normalized axis, else the gradient is 0
            const std::size_t r = dim(rng, axis == 0 ? 2 : 1, 4), c = dim(rng, axis == 0 ? 1 : 2, 5);
            Tensor x = random_tensor({r, c}, rng, -3.0, 3.0);
            Tensor mask = masked ? random_mask(r, c, axis, rng) : Tensor::zeros({r, c});
            // weights only on finite outputs; masked outputs are -inf
            std::vector<double> w(r * c);
            for (std::size_t i = 0; i < r * c; ++i) w[i] = std::isinf(mask.at(i)) ? 0.0 : rng.uniform(-1.0, 1.0);
            std::vector<double> fill(r * c);
            for (std::size_t i = 0; i < r * c; ++i) fill[i] = std::isinf(mask.at(i)) ? 1.0 : 0.0;
            Tensor weights = Tensor::from({r, c}, w);
            return grad_check(
                [&] {
                  Tensor y = log_softmax(add(x, mask), axis);
                  // sum finite cells only; masked ones are -inf
                  Tensor acc = Tensor::scalar(0.0);
                  for (std::size_t i = 0; i < r; ++i) {
                    Tensor row = slice_rows(y, i, 1);
                    for (std::size_t j = 0; j < c; ++j) {
                      if (fill[i * c + j] != 0.0) continue;
                      acc = add(acc, scale(slice_cols(row, j, 1), weights.at(i, j)));
                    }
                  }
                  return sum(acc);
                },
                {{"x", x}});
          }};
}

std::vector<std::vector<std::size_t>> random_sources(std::size_t out_rows, std::size_t n, Rng& rng) {
  std::vector<std::vector<std::size_t>> s(out_rows);
  for (auto& l : s) {
    const std::size_t k = rng.index(4);
    for (std::size_t i = 0; i < k; ++i) l.push_back(rng.index(n));
  }
  if (s.front().empty()) s.front().push_back(rng.index(n));  // all-empty lists have no gradient
  return s;
}

}  // namespace

std::vector<GradCase> gradient_cases() {
  std::vector<GradCase> cases;

  cases.push_back({"matmul", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t r = dim(rng, 1, 4), k = dim(rng, 1, 4), c = dim(rng, 1, 4);
                     Tensor a = random_tensor({r, k}, rng), b = random_tensor({k, c}, rng);
                     return grad_check([&] { return random_projection(matmul(a, b), seed); }, {{"a", a}, {"b", b}});
                   }});
  cases.push_back(unary("transpose", [](const Tensor& x) { return transpose(x); }));
  cases.push_back(unary("reshape", [](const Tensor& x) { return reshape(x, {x.numel()}); }));
  cases.push_back(binary("add", [](const Tensor& a, const Tensor& b) { return add(a, b); }));
  cases.push_back(binary("sub", [](const Tensor& a, const Tensor& b) { return sub(a, b); }));
  cases.push_back(binary("mul", [](const Tensor& a, const Tensor& b) { return mul(a, b); }));
  cases.push_back(unary("scale", [](const Tensor& x) { return scale(x, -1.7); }));
  cases.push_back(unary("add_scalar", [](const Tensor& x) { return add_scalar(x, 0.3); }));
  cases.push_back(unary("neg", [](const Tensor& x) { return neg(x); }));
  cases.push_back(unary("sigmoid", [](const Tensor& x) { return sigmoid(x); }, -6.0, 6.0));
  cases.push_back(unary("tanh", [](const Tensor& x) { return tanh(x); }));
  // 12+ cells so an all-negative draw is practically impossible
  cases.push_back(unary("relu", [](const Tensor& x) { return relu(x); }, -1.0, 2.0, 3, 4));
  cases.push_back(unary("exp", [](const Tensor& x) { return exp(x); }));
  cases.push_back(unary("log", [](const Tensor& x) { return log(x); }, 0.2, 3.0));
  cases.push_back(unary("log_sigmoid", [](const Tensor& x) { return log_sigmoid(x); }, -30.0, 30.0));
  cases.push_back(unary("sum", [](const Tensor& x) { return scale(sum(x), 1.3); }));
  cases.push_back(unary("mean", [](const Tensor& x) { return scale(mean(x), 1.3); }));
  for (int axis : {0, -1})
    for (bool masked : {false, true}) {
      cases.push_back(softmax_case(axis, masked));
      cases.push_back(log_softmax_case(axis, masked));
    }
  cases.push_back({"layer_norm", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t r = dim(rng, 1, 4), c = dim(rng, 2, 6);
                     Tensor x = random_tensor({r, c}, rng, -2.0, 2.0);
                     Tensor g = random_tensor({1, c}, rng, 0.5, 1.5), b = random_tensor({1, c}, rng);
                     return grad_check([&] { return random_projection(layer_norm(x, g, b), seed); },
                                       {{"x", x}, {"gain", g}, {"bias", b}});
                   }});
  cases.push_back({"embedding_lookup", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t v = dim(rng, 1, 6), d = dim(rng, 1, 4), n = dim(rng, 1, 6);
                     Tensor table = random_tensor({v, d}, rng);
                     std::vector<std::size_t> ids(n);
                     for (auto& i : ids) i = rng.index(v);
                     return grad_check([&] { return random_projection(embedding_lookup(table, ids), seed); },
                                       {{"table", table}});
                   }});
  cases.push_back({"slice_cols", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t r = dim(rng, 1, 4), c = dim(rng, 1, 6);
                     const std::size_t b = rng.index(c), n = 1 + rng.index(c - b);
                     Tensor x = random_tensor({r, c}, rng);
                     return grad_check([&] { return random_projection(slice_cols(x, b, n), seed); }, {{"x", x}});
                   }});
  cases.push_back({"slice_rows", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t r = dim(rng, 1, 6), c = dim(rng, 1, 4);
                     const std::size_t b = rng.index(r), n = 1 + rng.index(r - b);
                     Tensor x = random_tensor({r, c}, rng);
                     return grad_check([&] { return random_projection(slice_rows(x, b, n), seed); }, {{"x", x}});
                   }});
  cases.push_back({"concat_cols", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t r = dim(rng, 1, 4);
                     Tensor a = random_tensor({r, dim(rng, 1, 3)}, rng), b = random_tensor({r, dim(rng, 1, 3)}, rng);
                     return grad_check([&] { return random_projection(concat_cols({a, b, a}), seed); },
                                       {{"a", a}, {"b", b}});
                   }});
  cases.push_back({"concat_rows", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t c = dim(rng, 1, 4);
                     Tensor a = random_tensor({dim(rng, 1, 3), c}, rng), b = random_tensor({dim(rng, 1, 3), c}, rng);
                     return grad_check([&] { return random_projection(concat_rows({b, a, b}), seed); },
                                       {{"a", a}, {"b", b}});
                   }});
  for (bool average : {false, true})
    cases.push_back({average ? "neighbor_sum average" : "neighbor_sum", [average](std::uint64_t seed) {
                       Rng rng(seed);
                       const std::size_t n = dim(rng, 1, 6), d = dim(rng, 1, 4);
                       Tensor x = random_tensor({n, d}, rng);
                       const auto src = random_sources(dim(rng, 1, 6), n, rng);
                       return grad_check([&] { return random_projection(neighbor_sum(x, src, average), seed); },
                                         {{"x", x}});
                     }});
  cases.push_back({"pick", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t r = dim(rng, 1, 5), c = dim(rng, 1, 5);
                     Tensor x = random_tensor({r, c}, rng);
                     std::vector<std::size_t> cols(r);
                     for (auto& j : cols) j = rng.index(c);
                     return grad_check([&] { return random_projection(pick(x, cols), seed); }, {{"x", x}});
                   }});
  cases.push_back({"cross_entropy", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t r = dim(rng, 1, 5), c = dim(rng, 2, 6);
                     Tensor x = random_tensor({r, c}, rng, -3.0, 3.0);
                     std::vector<std::size_t> t(r);
                     for (auto& j : t) j = rng.index(c);
                     return grad_check([&] { return cross_entropy(log_softmax(x), t); }, {{"x", x}});
                   }});
  cases.push_back({"dropout", [](std::uint64_t seed) {
                     Rng rng(seed);
                     Tensor x = random_tensor({dim(rng, 3, 4), dim(rng, 4, 5)}, rng);
                     return grad_check(
                         [&] {
                           Rng mask_rng(seed + 17);  // same mask on every evaluation
                           return random_projection(dropout(x, 0.4, true, mask_rng), seed);
                         },
                         {{"x", x}});
                   }});

  // ---- composed model paths ----------------------------------------------
  cases.push_back({"rgcn encode_entities", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const KnowledgeGraph g = random_graph(rng, 8, 3, rng.bernoulli(0.5));
                     const std::size_t layers = 1 + rng.index(2), d = dim(rng, 1, 3);
                     const RgcnOptions opts{rng.bernoulli(0.5) ? RgcnNorm::neighbor_count : RgcnNorm::constant_one, 0.0};
                     Tensor h0 = random_tensor({g.num_entities(), d}, rng);
                     std::vector<RgcnLayer> ls;
                     // redraw until some output survives the relu, otherwise nothing is checked
                     for (bool alive = false; !alive;) {
                       ls.clear();
                       for (std::size_t l = 0; l < layers; ++l)
                         ls.push_back(RgcnLayer::init(g.num_edge_types(), d, d, rng));
                       NoGradGuard ng;
                       const Tensor out = encode_entities(g, h0, ls, opts);
                       alive = std::any_of(out.data().begin(), out.data().end(), [](double v) { return v > 0.0; });
                     }
                     Params ps{{"H0", h0}};
                     for (std::size_t l = 0; l < layers; ++l) ls[l].collect("rgcn" + std::to_string(l), ps);
                     return grad_check([&] { return random_projection(encode_entities(g, h0, ls, opts), seed); }, ps);
                   }});
  cases.push_back({"attention_pool", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t n = dim(rng, 1, 5), d = dim(rng, 1, 4);
                     Tensor hu = random_tensor({n, d}, rng);
                     AttentionPooler p = AttentionPooler::init(d, dim(rng, 1, 4), rng);
                     Params ps{{"H_u", hu}};
                     p.collect("attention", ps);
                     return grad_check([&] { return random_projection(attention_pool(hu, p).user, seed); }, ps);
                   }});
  cases.push_back({"recommendation_loss", [](std::uint64_t seed) {
                     Rng rng(seed);
                     KnowledgeGraph g = random_graph(rng, 10, 2, true);
                     while (g.items().size() < 2) g = random_graph(rng, 10, 2, true);
                     const std::size_t d = dim(rng, 1, 4);
                     Tensor h = random_tensor({g.num_entities(), d}, rng);
                     AttentionPooler p = AttentionPooler::init(d, d, rng);
                     std::vector<EntityId> ids;
                     for (EntityId v = 0; v < g.num_entities(); ++v)
                       if (rng.bernoulli(0.4)) ids.push_back(v);
                     if (ids.empty()) ids.push_back(0);
                     const UserContext ctx = make_user_context(ids, g);
                     const EntityId gold = g.items()[rng.index(g.items().size())];
                     Params ps{{"H", h}};
                     p.collect("attention", ps);
                     return grad_check(
                         [&] {
                           return recommendation_loss(recommend(user_representation(ctx, h, p).user, h, g), gold, g);
                         },
                         ps);
                   }});
  cases.push_back({"mixed_distribution", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t r = dim(rng, 1, 3), v = dim(rng, 2, 5), i = dim(rng, 1, 4);
                     Tensor wl = random_tensor({r, v}, rng), il = random_tensor({1, i}, rng), s = random_tensor({r, 1}, rng);
                     return grad_check(
                         [&] { return random_projection(mixed_distribution(softmax(wl), softmax(il), sigmoid(s)), seed); },
                         {{"word_logits", wl}, {"item_logits", il}, {"switch", s}});
                   }});
  cases.push_back({"mixed_log_distribution", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t r = dim(rng, 1, 3), v = dim(rng, 2, 5), i = dim(rng, 1, 4);
                     Tensor wl = random_tensor({r, v}, rng), il = random_tensor({1, i}, rng), s = random_tensor({r, 1}, rng, -4, 4);
                     return grad_check(
                         [&] {
                           return random_projection(
                               mixed_log_distribution(log_softmax(wl), log_softmax(il), s), seed);
                         },
                         {{"word_logits", wl}, {"item_logits", il}, {"switch", s}});
                   }});
  cases.push_back({"multi_head_attention", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t heads = 1 + rng.index(2), d = heads * dim(rng, 1, 2);
                     const std::size_t nq = dim(rng, 1, 4), nk = dim(rng, 1, 4);
                     const bool causal = rng.bernoulli(0.5);
                     Tensor q = random_tensor({nq, d}, rng);
                     Tensor kv = causal ? q : random_tensor({nk, d}, rng);
                     MultiHeadAttention m = MultiHeadAttention::init(d, heads, rng);
                     Params ps{{"q_in", q}};
                     if (!causal) ps.push_back({"kv_in", kv});
                     m.collect("mha", ps);
                     return grad_check([&] { return random_projection(m(q, kv, causal), seed); }, ps);
                   }});
  cases.push_back({"dialog transformer", [](std::uint64_t seed) {
                     Rng rng(seed);
                     TransformerConfig cfg;
                     cfg.model_dim = 4;
                     cfg.num_heads = 2;
                     cfg.num_layers = 1;
                     cfg.ffn_dim = 5;
                     cfg.max_seq_len = 16;
                     cfg.dropout = 0.0;
                     const std::size_t words = 8, items = 3, user_dim = 3;
                     DialogTransformer t = DialogTransformer::init(cfg, words, items, user_dim, rng);
                     std::vector<SymbolId> hist(dim(rng, 1, 5)), prefix{Vocabulary::kSos}, target;
                     for (auto& s : hist) s = rng.index(words + items);
                     const std::size_t steps = dim(rng, 1, 3);
                     for (std::size_t k = 0; k < steps; ++k) target.push_back(rng.index(words + items));
                     for (std::size_t k = 0; k + 1 < steps; ++k) prefix.push_back(target[k]);
                     Tensor user = random_tensor({1, user_dim}, rng);
                     Tensor item_logits = random_tensor({1, items}, rng);
                     Params ps{{"user", user}, {"item_logits", item_logits}};
                     t.collect("dialog", ps);
                     return grad_check(
                         [&] {
                           const Tensor mem = t.encode(hist);
                           const Tensor o = t.decode(prefix, mem);
                           const Tensor lp = mixed_log_distribution(t.output_log_distribution(o, t.vocabulary_bias(user)),
                                                                    log_softmax(item_logits), t.switch_logit(o));
                           return cross_entropy(lp, target);
                         },
                         ps);
                   }});
  cases.push_back({"full training loss", [](std::uint64_t seed) {
                     TinyWorld w = tiny_world(seed);
                     TrainConfig cfg;
                     cfg.model = w.model.config();
                     std::vector<std::size_t> all(w.examples.size());
                     for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
                     return grad_check([&] { return batch_loss(w.model, w.examples, all, cfg, false, nullptr).total; },
                                       w.model.all_params());
                   }});
  return cases;
}

}  // namespace kbrd::testing
