// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero when any of them fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "gradient_cases.hpp"
#include "kbrd/checkpoint.hpp"
#include "kbrd/metrics.hpp"
#include "kbrd/service.hpp"
#include "kbrd/synthetic.hpp"
#include "kbrd/text.hpp"
#include "kbrd/train.hpp"
#include "testing.hpp"

using namespace kbrd;
using namespace kbrd::testing;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---- gradients -------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const auto cases = gradient_cases();
  double worst = 0.0;
  std::string worst_where;
  std::size_t checks = 0, failures = 0, vacuous = 0;
  for (const auto& c : cases)
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
      const GradCheck r = c.run(seed);
      ++checks;
      if (!(r.max_rel_error < 1e-4)) ++failures;
      if (!(r.grad_norm > 0.0)) ++vacuous;
      if (!(r.max_rel_error <= worst)) {
        worst = r.max_rel_error;
        worst_where = c.name + "/" + r.worst_param + " seed " + std::to_string(seed);
      }
    }
  const double secs = seconds_since(t0);
  const bool has_full = std::any_of(cases.begin(), cases.end(), [](const GradCase& c) {
    return c.name.find("full") != std::string::npos;
  });
  return {failures == 0 && vacuous == 0 && has_full && secs < 60.0,
          fmt("%zu cases x 100 seeds, %zu failures, %zu zero-gradient, max rel err %.2e (%s), %.1f s", cases.size(),
              failures, vacuous, worst, worst_where.c_str(), secs)};
}

// ---- R-GCN oracle ----------------------------------------------------------

Outcome rgcn_oracle() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t max_nodes = 0, max_rel = 0, two_layer = 0;
  for (std::uint64_t seed = 1000; seed < 1050; ++seed) {
    Rng rng(seed);
    auto g = random_graph(rng, 20, 3, rng.bernoulli(0.5));
    max_nodes = std::max(max_nodes, g.num_entities());
    max_rel = std::max(max_rel, g.num_relations());
    const std::size_t layers = seed % 2 ? 2 : 1, d = 1 + rng.index(4);
    two_layer += layers == 2;
    const RgcnNorm norm = rng.bernoulli(0.5) ? RgcnNorm::neighbor_count : RgcnNorm::constant_one;
    auto h0 = random_tensor({g.num_entities(), d}, rng, -1, 1, false);
    std::vector<RgcnLayer> ls;
    for (std::size_t l = 0; l < layers; ++l) ls.push_back(RgcnLayer::init(g.num_edge_types(), d, d, rng));
    auto fast = to_rows(encode_entities(g, h0, ls, {norm, 0.0}));
    auto slow = to_rows(h0);
    for (const auto& l : ls) slow = naive_rgcn_layer(g, slow, l, norm);
    for (std::size_t i = 0; i < fast.size(); ++i)
      for (std::size_t j = 0; j < fast[i].size(); ++j) worst = std::max(worst, std::abs(fast[i][j] - slow[i][j]));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-10 && max_nodes <= 20 && max_rel <= 3 && secs < 10.0,
          fmt("50 graphs (max %zu nodes, %zu relations, %zu two-layer), max abs diff %.2e, %.2f s", max_nodes, max_rel,
              two_layer, worst, secs)};
}

// ---- distributions ---------------------------------------------------------

struct RandomState {
  KnowledgeGraph graph;
  Recommendation rec;
  Tensor user;
  DialogTransformer dialog;
  Tensor o;
};

RandomState random_state(std::uint64_t seed) {
  Rng rng(seed);
  RandomState s{random_graph(rng, 20, 3, rng.bernoulli(0.5)), {}, {}, {}, {}};
  const std::size_t d = 2 + rng.index(6);
  auto h0 = random_tensor({s.graph.num_entities(), d}, rng, -2, 2, false);
  std::vector<RgcnLayer> ls;
  for (std::size_t l = 0; l < 1 + rng.index(2); ++l) ls.push_back(RgcnLayer::init(s.graph.num_edge_types(), d, d, rng));
  auto reps = encode_entities(s.graph, h0, ls);
  auto pooler = AttentionPooler::init(d, 1 + rng.index(4), rng);
  std::vector<EntityId> ctx;
  for (EntityId e = 0; e < s.graph.num_entities(); ++e)
    if (rng.bernoulli(0.3)) ctx.push_back(e);
  s.user = user_representation(make_user_context(ctx, s.graph), reps, pooler).user;
  s.rec = recommend(s.user, reps, s.graph);
  TransformerConfig tc;
  tc.model_dim = 4;
  tc.num_heads = 2;
  tc.num_layers = 1;
  tc.ffn_dim = 4;
  tc.dropout = 0.0;
  s.dialog = DialogTransformer::init(tc, Vocabulary::kNumReserved + 1 + rng.index(30), s.graph.items().size(), d, rng);
  s.o = random_tensor({1, 4}, rng, -3, 3, false);
  return s;
}

Tensor item_probs(const RandomState& s) {
  std::vector<double> p;
  for (EntityId i : s.graph.items()) p.push_back(s.rec.probs.at(i));
  return Tensor::row(std::move(p));
}

Outcome distribution_soundness() {
  double rec_dev = 0.0, joint_dev = 0.0;
  std::size_t nonzero_non_items = 0;
  for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
    const RandomState s = random_state(seed);
    double sum = 0.0;
    for (EntityId e = 0; e < s.graph.num_entities(); ++e) {
      const double p = s.rec.probs.at(e);
      if (s.graph.is_item(e)) sum += p;
      else if (p != 0.0) ++nonzero_non_items;
    }
    rec_dev = std::max(rec_dev, std::abs(sum - 1.0));

    const Tensor p_words = s.dialog.output_distribution(s.o, s.dialog.vocabulary_bias(s.user));
    const Tensor p_items = item_probs(s);
    std::vector<Tensor> switches{s.dialog.switch_probability(s.o)};
    for (double ps : {0.0, 0.25, 0.5, 1.0}) switches.push_back(Tensor::full({1, 1}, ps));
    for (const auto& ps : switches) {
      const Tensor joint = mixed_distribution(p_words, p_items, ps);
      double js = 0.0;
      for (double v : joint.data()) js += v;
      joint_dev = std::max(joint_dev, std::abs(js - 1.0));
    }
  }
  return {rec_dev <= 1e-9 && joint_dev <= 1e-9 && nonzero_non_items == 0,
          fmt("1000 states: max |sum P_rec - 1| %.2e, non-item mass entries %zu, max |sum joint - 1| %.2e over "
              "p_s in {model, 0, .25, .5, 1}",
              rec_dev, nonzero_non_items, joint_dev)};
}

Outcome zero_bias_reduction() {
  std::size_t mismatches = 0, compared = 0;
  for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
    const RandomState s = random_state(seed);
    const auto a = s.dialog.output_distribution(s.o, Tensor::zeros({1, s.dialog.num_words()})).to_vector();
    const auto b = s.dialog.output_distribution(s.o, Tensor()).to_vector();
    compared += a.size();
    for (std::size_t i = 0; i < a.size(); ++i) mismatches += a[i] != b[i];
  }
  // Whole model: a zeroed bias map against a model without the bias.
  auto with_cfg = tiny_model_config();
  auto without_cfg = with_cfg;
  without_cfg.use_vocab_bias = false;
  auto with = tiny_world(9, with_cfg);
  auto without = tiny_world(9, without_cfg);
  for (Tensor* t : {&with.model.dialog.bias_net.weight, &with.model.dialog.bias_net.bias})
    std::fill(t->mutable_data().begin(), t->mutable_data().end(), 0.0);
  const Tensor reps_a = with.model.entity_representations();
  const Tensor reps_b = without.model.entity_representations();
  std::size_t model_mismatch = 0;
  for (std::size_t i = 0; i < with.examples.size(); ++i) {
    const auto a = with.model.word_log_probs(with.examples[i], reps_a);
    const auto b = without.model.word_log_probs(without.examples[i], reps_b);
    model_mismatch += a != b;
    model_mismatch += with.model.generate(with.examples[i].history).symbols !=
                      without.model.generate(without.examples[i].history).symbols;
  }
  return {mismatches == 0 && model_mismatch == 0,
          fmt("%zu probabilities over 1000 states, %zu differ; full-model word log-probs and replies: %zu differ",
              compared, mismatches, model_mismatch)};
}

// ---- overfit ---------------------------------------------------------------

struct OverfitRun {
  KbrdModel model;
  std::vector<TrainingExample> examples;
  std::vector<EpochLog> log;
  double seconds = 0.0;
};

OverfitRun train_overfit(const SyntheticWorld& world) {
  const auto t0 = Clock::now();
  const TrainConfig cfg = overfit_train_config();
  auto g = world.graph({.add_inverse_relations = cfg.model.add_inverse_relations});
  auto lex = world.lexicon(g);
  OverfitRun r;
  r.model = make_model(cfg.model, std::move(g), std::move(lex), world.train, cfg.min_word_count, cfg.seed);
  r.examples = build_examples(world.train, r.model.symbols(), r.model.lexicon(), r.model.example_options());
  r.log = train(r.model, r.examples, cfg).epochs;
  r.seconds = seconds_since(t0);
  return r;
}

struct Shared {
  SyntheticWorld world = overfit_world();
  std::unique_ptr<OverfitRun> overfit;
};

Outcome overfit_experiment(Shared& sh) {
  const auto& w = sh.world;
  sh.overfit = std::make_unique<OverfitRun>(train_overfit(w));
  const OverfitRun second = train_overfit(w);
  const OverfitRun& r = *sh.overfit;
  const bool deterministic = serialize_checkpoint(r.model) == serialize_checkpoint(second.model);

  bool monotone = true;
  for (std::size_t e = 5; e < r.log.size(); ++e) monotone = monotone && r.log[e].mean_loss < r.log[e - 1].mean_loss;
  const auto report = evaluate(r.model, r.examples, {.ks = {1, 10, 50}, .generate_responses = false});
  const double r1 = report.recall_at.at(1);
  const double ppl = report.perplexity.value_or(INFINITY);
  const auto& g = r.model.graph();
  const std::size_t vocab = r.model.symbols().num_words();
  const bool corpus_shape = w.train.size() == 50 && g.num_entities() <= 40 && g.triples().size() <= 80 && vocab <= 300;
  const bool pass = r1 >= 0.9 && ppl <= 1.5 && r.log.size() <= 200 && r.seconds < 300.0 && deterministic &&
                    monotone && corpus_shape;
  return {pass, fmt("%zu dialogues, %zu entities, %zu triples, vocab %zu; %zu epochs in %.1f s; train R@1 %.3f, PPL "
                    "%.4f; loss monotone after epoch 5: %s; identical bytes on rerun: %s",
                    w.train.size(), g.num_entities(), g.triples().size(), vocab, r.log.size(), r.seconds, r1, ppl,
                    monotone ? "yes" : "no", deterministic ? "yes" : "no")};
}

// ---- ablation and cold start ----------------------------------------------

struct AblationResult {
  double recall50 = 0.0;
  double bucket0 = 0.0;
};

AblationResult run_variant(std::uint64_t seed, Variant v) {
  const SyntheticWorld w = ablation_world(seed);
  TrainConfig cfg = ablation_train_config();
  cfg.seed = seed;
  cfg.model = apply_variant(cfg.model, v);
  auto g = w.graph({.add_inverse_relations = cfg.model.add_inverse_relations});
  auto lex = w.lexicon(g);
  KbrdModel m = make_model(cfg.model, std::move(g), std::move(lex), w.train, cfg.min_word_count, seed);
  const auto train_ex = build_examples(w.train, m.symbols(), m.lexicon(), m.example_options());
  train(m, train_ex, cfg);
  const auto test_ex = build_examples(w.test, m.symbols(), m.lexicon(), m.example_options());
  const auto rep = evaluate(m, test_ex, {.ks = {50}, .generate_responses = false});
  AblationResult out{rep.recall_at.at(50), NAN};
  for (const auto& b : rep.buckets)
    if (b.bucket == 0 && b.recall) out.bucket0 = *b.recall;
  return out;
}

struct AblationTable {
  // [variant][seed]
  std::vector<std::vector<AblationResult>> runs;
  double seconds = 0.0;
  double mean_r50(Variant v) const { return mean(v, &AblationResult::recall50); }
  double mean_b0(Variant v) const { return mean(v, &AblationResult::bucket0); }
  double mean(Variant v, double AblationResult::*f) const {
    double s = 0.0;
    for (const auto& r : runs[static_cast<std::size_t>(v)]) s += r.*f;
    return s / static_cast<double>(runs[static_cast<std::size_t>(v)].size());
  }
};

const std::vector<Variant> kVariants{Variant::items_only, Variant::dialog_only, Variant::kg_only, Variant::full};

AblationTable run_ablation() {
  const auto t0 = Clock::now();
  AblationTable t;
  t.runs.resize(kVariants.size());
  for (Variant v : kVariants)
    for (std::uint64_t seed = 1; seed <= 5; ++seed) t.runs[static_cast<std::size_t>(v)].push_back(run_variant(seed, v));
  t.seconds = seconds_since(t0);
  return t;
}

Outcome ablation_direction(const AblationTable& t) {
  const double items = t.mean_r50(Variant::items_only), dialog = t.mean_r50(Variant::dialog_only),
               kg = t.mean_r50(Variant::kg_only), full = t.mean_r50(Variant::full);
  return {full >= std::max(dialog, kg) && std::max(dialog, kg) >= items,
          fmt("mean held-out R@50 over 5 seeds: full %.3f, dialog-only %.3f, kg-only %.3f, items-only %.3f (%.0f s)",
              full, dialog, kg, items, t.seconds)};
}

Outcome cold_start(const AblationTable& t) {
  const double items = t.mean_b0(Variant::items_only), dialog = t.mean_b0(Variant::dialog_only),
               full = t.mean_b0(Variant::full);
  return {std::isfinite(items) && dialog > items && full > items,
          fmt("mean bucket-0 R@50 over 5 seeds: full %.3f, dialog-only %.3f, items-only %.3f", full, dialog, items)};
}

// ---- metric oracles --------------------------------------------------------

Outcome metric_oracles() {
  // Recall against a full sort of every item by (score desc, id asc).
  std::size_t recall_mismatch = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Rng rng(seed + 5000);
    auto g = random_graph(rng, 20, 2, false);
    std::vector<double> scores(g.num_entities()), probs(g.num_entities(), 0.0);
    for (auto& s : scores) s = std::round(rng.uniform(-3, 3) * 2) / 2;  // coarse, so ties happen
    const auto ranked = rank_items(scores, probs, g);
    std::vector<EntityId> order(g.items().begin(), g.items().end());
    std::sort(order.begin(), order.end(), [&](EntityId a, EntityId b) {
      return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
    });
    const EntityId gold = g.items()[rng.index(g.items().size())];
    const std::size_t pos = std::find(order.begin(), order.end(), gold) - order.begin();
    for (std::size_t k : {std::size_t{1}, std::size_t{2}, std::size_t{10}, std::size_t{50}, 1 + rng.index(20)})
      recall_mismatch += recall_at_k(ranked, gold, k) != static_cast<int>(pos < k);
  }

  // Distinct-n against hand-enumerated n-gram counts: {unique, total} per
  // sentence for n = 3 and n = 4; {0, 0} marks a sentence that is too short.
  struct Row {
    const char* text;
    int u3, t3, u4, t4;
  };
  const std::vector<Row> rows{{"a b c d", 2, 2, 1, 1},
                              {"a a a a", 1, 2, 1, 1},
                              {"a b", 0, 0, 0, 0},
                              {"x y x y x y", 2, 4, 2, 3},
                              {"i like it i like it", 3, 4, 3, 3},
                              {"the cat sat on the mat", 4, 4, 3, 3},
                              {"go go go", 1, 1, 0, 0},
                              {"a b a b a", 2, 3, 2, 2},
                              {"one two three one two three one", 3, 5, 3, 4},
                              {"hello", 0, 0, 0, 0}};
  std::vector<std::vector<std::string>> sentences;
  double want3 = 0, want4 = 0;
  int n3 = 0, n4 = 0;
  std::size_t distinct_mismatch = 0;
  for (const auto& r : rows) {
    sentences.push_back(tokenize(r.text));
    if (r.t3) {
      want3 += static_cast<double>(r.u3) / r.t3;
      ++n3;
      distinct_mismatch += std::abs(distinct_n({sentences.back()}, 3) - static_cast<double>(r.u3) / r.t3) > 1e-15;
    }
    if (r.t4) {
      want4 += static_cast<double>(r.u4) / r.t4;
      ++n4;
    }
  }
  want3 /= n3;
  want4 /= n4;
  const double got3 = distinct_n(sentences, 3), got4 = distinct_n(sentences, 4);
  distinct_mismatch += std::abs(got3 - want3) > 1e-12;
  distinct_mismatch += std::abs(got4 - want4) > 1e-12;

  // Uniform word distribution over the overfit vocabulary.
  auto cfg = overfit_train_config();
  cfg.model.use_switch = false;
  const auto w = overfit_world();
  auto g = w.graph();
  auto lex = w.lexicon(g);
  KbrdModel m = make_model(cfg.model, std::move(g), std::move(lex), w.train, 1, 3);
  for (Tensor* t : {&m.dialog.output.weight, &m.dialog.output.bias, &m.dialog.bias_net.weight, &m.dialog.bias_net.bias})
    std::fill(t->mutable_data().begin(), t->mutable_data().end(), 0.0);
  const auto ex = build_examples(w.train, m.symbols(), m.lexicon(), m.example_options());
  const double ppl = *evaluate(m, ex, {.ks = {1}, .generate_responses = false}).perplexity;
  const double v = static_cast<double>(m.symbols().num_words());

  return {recall_mismatch == 0 && distinct_mismatch == 0 && std::abs(ppl - v) <= 1e-9,
          fmt("recall: 100 cases, %zu mismatches; distinct-3 %.6f / distinct-4 %.6f vs hand %.6f / %.6f; uniform "
              "PPL %.12f vs |V| = %.0f",
              recall_mismatch, got3, got4, want3, want4, ppl, v)};
}

// ---- checkpoint ------------------------------------------------------------

Outcome checkpoint_round_trip(Shared& sh) {
  if (!sh.overfit) return {false, "overfit model unavailable"};
  const KbrdModel& m = sh.overfit->model;
  TempDir dir;
  save_checkpoint(dir.file("m.ckpt"), m);
  const KbrdModel loaded = load_checkpoint(dir.file("m.ckpt")).model;

  const std::vector<Turn> prompt{{Speaker::user, "hi ! i am in the mood for a western movie .", {}},
                                 {Speaker::recommender, "sure ! who is your favorite actor ?", {}},
                                 {Speaker::user, "i really like lily chen .", {}}};
  std::size_t diffs = 0;
  const auto ctx_a = m.context_for(prompt), ctx_b = loaded.context_for(prompt);
  diffs += !(ctx_a == ctx_b);
  diffs += m.recommend(ctx_a).probs.to_vector() != loaded.recommend(ctx_b).probs.to_vector();
  diffs += m.vocabulary_bias(ctx_a) != loaded.vocabulary_bias(ctx_b);
  const Response ra = m.generate(prompt), rb = loaded.generate(prompt);
  diffs += ra.symbols != rb.symbols || ra.text != rb.text;
  const Response ba = m.generate(prompt, {.max_len = 16, .beam = 3}), bb = loaded.generate(prompt, {.max_len = 16, .beam = 3});
  diffs += ba.symbols != bb.symbols;
  const auto& ex = sh.overfit->examples.front();
  diffs += m.word_log_probs(ex, m.entity_representations()) != loaded.word_log_probs(ex, loaded.entity_representations());
  diffs += serialize_checkpoint(m) != serialize_checkpoint(loaded);
  return {diffs == 0, fmt("7 comparisons after save/load, %zu differ; reply \"%s\"", diffs, ra.text.c_str())};
}

// ---- HTTP session ----------------------------------------------------------

bool valid_turn_json(const json& j) {
  if (!j.is_object() || !j.contains("reply") || !j["reply"].is_string()) return false;
  for (const char* arr : {"recommendations", "bias_words", "linked_entities"})
    if (!j.contains(arr) || !j[arr].is_array()) return false;
  for (const auto& e : j["recommendations"])
    if (!e.contains("entity") || !e["entity"].is_string() || !e.contains("prob") || !e["prob"].is_number()) return false;
  for (const auto& e : j["bias_words"])
    if (!e.contains("word") || !e["word"].is_string() || !e.contains("bias") || !e["bias"].is_number()) return false;
  for (const auto& e : j["linked_entities"])
    if (!e.is_string()) return false;
  return true;
}

Outcome service_contract(Shared& sh) {
  if (!sh.overfit) return {false, "overfit model unavailable"};
  TempDir dir;
  save_checkpoint(dir.file("m.ckpt"), sh.overfit->model);
  auto ck = load_checkpoint(dir.file("m.ckpt"));
  ServiceOptions opts;
  opts.generation = {.max_len = ck.model.config().max_response_len, .beam = 1};
  ChatService service(std::make_shared<const KbrdModel>(std::move(ck.model)), opts);
  HttpServer server(service);
  const int port = server.bind("127.0.0.1", 0);
  if (port <= 0) return {false, "could not bind a port"};
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);

  const std::vector<std::string> script{"hi ! i am in the mood for a comedy movie .", "i really like max ford .",
                                        "thanks , i will check it out ."};
  const std::vector<std::string> expected{"sure ! who is your favorite actor ?", "then you should watch Silent Creek .",
                                          "enjoy the movie , bye !"};
  bool schema_ok = true, monotone = true, http_ok = true;
  std::vector<std::vector<std::string>> replies(2);
  std::vector<std::size_t> sizes;
  for (int s = 0; s < 2; ++s) {
    auto created = client.Post("/sessions", "", "application/json");
    if (!created || created->status != 201) {
      http_ok = false;
      break;
    }
    const std::string id = json::parse(created->body).at("session_id");
    std::size_t prev = 0;
    for (const auto& text : script) {
      auto r = client.Post("/sessions/" + id + "/messages", json{{"text", text}}.dump(), "application/json");
      if (!r || r->status != 200) {
        http_ok = false;
        break;
      }
      const json j = json::parse(r->body, nullptr, false);
      schema_ok = schema_ok && valid_turn_json(j);
      replies[s].push_back(j.value("reply", ""));
      auto t = client.Get("/sessions/" + id);
      if (!t || t->status != 200) {
        http_ok = false;
        break;
      }
      const std::size_t n = json::parse(t->body)["context"].size();
      monotone = monotone && n >= prev;
      if (s == 0) sizes.push_back(n);
      prev = n;
    }
  }
  server.stop();
  th.join();
  const bool deterministic = http_ok && replies[0] == replies[1];
  const bool grew = sizes.size() == 3 && sizes.back() > sizes.front();
  const bool memorized = replies[0] == expected;
  std::ostringstream d;
  d << "3 turns x 2 sessions; context sizes";
  for (auto n : sizes) d << ' ' << n;
  d << "; replies identical across sessions: " << (deterministic ? "yes" : "no")
    << "; schema valid: " << (schema_ok ? "yes" : "no") << "; replies match training responses: "
    << (memorized ? "yes" : "no");
  for (const auto& r : replies[0]) d << " | " << r;
  return {http_ok && deterministic && monotone && grew && schema_ok && memorized, d.str()};
}

}  // namespace

int main() {
  Shared shared;
  std::unique_ptr<AblationTable> ablation;
  auto ablation_table = [&]() -> const AblationTable& {
    if (!ablation) ablation = std::make_unique<AblationTable>(run_ablation());
    return *ablation;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient-suite", gradient_suite},
      {"rgcn-oracle", rgcn_oracle},
      {"distribution-soundness", distribution_soundness},
      {"zero-bias-reduction", zero_bias_reduction},
      {"overfit", [&] { return overfit_experiment(shared); }},
      {"ablation-direction", [&] { return ablation_direction(ablation_table()); }},
      {"cold-start", [&] { return cold_start(ablation_table()); }},
      {"metric-oracles", metric_oracles},
      {"checkpoint-round-trip", [&] { return checkpoint_round_trip(shared); }},
      {"service-contract", [&] { return service_contract(shared); }},
  };

  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  std::cout << (failed ? "FAILED " : "ALL PASSED ") << criteria.size() - failed << "/" << criteria.size() << std::endl;
  return failed ? 1 : 0;
}
