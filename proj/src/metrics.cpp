#include "kbrd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "kbrd/stopwords_data.hpp"
#include "kbrd/text.hpp"

namespace kbrd {

using nlohmann::json;

int recall_at_k(std::span<const RankedItem> ranked, EntityId gold, std::size_t k) {
  if (k == 0) throw ContractViolation("recall_at_k: k must be at least 1");
  const std::size_t n = std::min(k, ranked.size());
  for (std::size_t i = 0; i < n; ++i)
    if (ranked[i].entity == gold) return 1;
  return 0;
}

double mean_recall(const std::vector<std::vector<RankedItem>>& rankings, const std::vector<EntityId>& golds,
                   std::size_t k) {
  if (rankings.size() != golds.size()) throw DimensionError("mean_recall: rankings and golds differ in length");
  if (rankings.empty()) throw UndefinedMetricError("recall over an empty evaluation set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < rankings.size(); ++i) hits += static_cast<std::size_t>(recall_at_k(rankings[i], golds[i], k));
  return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

void CompensatedSum::add(double x) {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x))
    comp_ += (sum_ - t) + x;
  else
    comp_ += (x - t) + sum_;
  sum_ = t;
}

double perplexity(const std::vector<std::vector<double>>& token_log_probs) {
  CompensatedSum nll;
  std::size_t tokens = 0;
  for (const auto& seq : token_log_probs)
    for (double lp : seq) {
      nll.add(-lp);
      ++tokens;
    }
  if (tokens == 0) throw UndefinedMetricError("perplexity over zero target tokens");
  return std::exp(nll.value() / static_cast<double>(tokens));
}

double distinct_n(const std::vector<std::vector<std::string>>& responses, std::size_t n) {
  if (n == 0) throw ContractViolation("distinct_n: n must be at least 1");
  if (responses.empty()) throw UndefinedMetricError("distinct-n over an empty response set");
  CompensatedSum total;
  std::size_t counted = 0;
  for (const auto& r : responses) {
    if (r.size() < n) continue;
    std::set<std::vector<std::string>> unique;
    const std::size_t grams = r.size() - n + 1;
    for (std::size_t i = 0; i < grams; ++i)
      unique.emplace(r.begin() + static_cast<std::ptrdiff_t>(i), r.begin() + static_cast<std::ptrdiff_t>(i + n));
    total.add(static_cast<double>(unique.size()) / static_cast<double>(grams));
    ++counted;
  }
  return counted ? total.value() / static_cast<double>(counted) : 0.0;
}

std::vector<BucketRow> cold_start_buckets(const std::vector<BucketCase>& cases, std::size_t cap) {
  std::vector<BucketRow> rows;
  if (cases.empty()) return rows;
  std::map<std::size_t, std::pair<std::size_t, std::pair<std::size_t, std::size_t>>> acc;  // count, (hits, scored)
  for (const auto& c : cases) {
    auto& a = acc[std::min(c.mentioned_items, cap)];
    ++a.first;
    if (c.hit) {
      a.second.first += static_cast<std::size_t>(*c.hit);
      ++a.second.second;
    }
  }
  for (const auto& [bucket, a] : acc) {
    BucketRow row;
    row.bucket = bucket;
    row.count = a.first;
    row.share = static_cast<double>(a.first) / static_cast<double>(cases.size());
    if (a.second.second) row.recall = static_cast<double>(a.second.first) / static_cast<double>(a.second.second);
    rows.push_back(row);
  }
  return rows;
}

std::set<std::string> parse_stopwords(const std::string& text) {
  std::set<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const std::string w = normalize(line);
    if (!w.empty() && line.find('#') != 0) out.insert(w);
  }
  return out;
}

const std::set<std::string>& default_stopwords() {
  static const std::set<std::string> words = parse_stopwords(detail::kStopwordsText);
  return words;
}

std::vector<BiasWord> top_bias_words(std::span<const double> bias, const Vocabulary& vocab,
                                     const std::set<std::string>& stopwords, std::size_t k) {
  if (k == 0) throw ContractViolation("top_bias_words: k must be at least 1");
  if (bias.size() != vocab.size())
    throw DimensionError("bias vector has " + std::to_string(bias.size()) + " entries for a vocabulary of " +
                         std::to_string(vocab.size()));
  std::vector<SymbolId> ids;
  for (SymbolId i = 0; i < vocab.size(); ++i)
    if (!Vocabulary::is_reserved(i) && !stopwords.count(vocab.word(i)) && !is_punctuation_token(vocab.word(i)))
      ids.push_back(i);
  const std::size_t n = std::min(k, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n), ids.end(), [&](SymbolId a, SymbolId b) {
    return bias[a] != bias[b] ? bias[a] > bias[b] : a < b;
  });
  std::vector<BiasWord> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({ids[i], vocab.word(ids[i]), bias[ids[i]]});
  return out;
}

std::vector<BiasWord> top_bias_words(const KbrdModel& model, const UserContext& ctx, std::size_t k,
                                     const std::set<std::string>& stopwords) {
  return top_bias_words(model.vocabulary_bias(ctx), model.symbols().vocab(), stopwords, k);
}

std::vector<BiasWord> top_bias_words_for_entity(const KbrdModel& model, const std::string& entity, std::size_t k,
                                                const std::set<std::string>& stopwords) {
  auto id = resolve_entity(entity, model.graph(), model.lexicon());
  if (!id) throw LookupError("unknown entity '" + entity + "'");
  return top_bias_words(model, make_user_context({*id}, model.graph()), k, stopwords);
}

EvalReport evaluate(const KbrdModel& model, const std::vector<TrainingExample>& examples, const EvalOptions& opts) {
  NoGradGuard no_grad;
  EvalReport r;
  r.num_examples = examples.size();
  const Tensor reps = model.entity_representations();
  const std::size_t k50 = 50;

  std::vector<std::vector<RankedItem>> rankings;
  std::vector<EntityId> golds;
  std::vector<BucketCase> cases;
  std::vector<std::vector<double>> lps;
  std::vector<std::vector<std::string>> responses;
  for (const auto& ex : examples) {
    if (ex.gold_item) {
      BucketCase c;
      c.mentioned_items = ex.context.num_items;
      auto ranked = model.recommend(ex.context, reps).ranked_items;
      c.hit = recall_at_k(ranked, *ex.gold_item, k50);
      cases.push_back(c);
      rankings.push_back(std::move(ranked));
      golds.push_back(*ex.gold_item);
    }
    lps.push_back(model.word_log_probs(ex, reps));
    if (opts.generate_responses) responses.push_back(tokenize(model.generate(ex.history).text));
  }
  r.num_rec_examples = golds.size();
  if (!golds.empty())
    for (std::size_t k : opts.ks) r.recall_at[k] = mean_recall(rankings, golds, k);
  std::size_t tokens = 0;
  for (const auto& s : lps) tokens += s.size();
  if (tokens) r.perplexity = perplexity(lps);
  if (!responses.empty()) {
    r.distinct_3 = distinct_n(responses, 3);
    r.distinct_4 = distinct_n(responses, 4);
  }
  r.buckets = cold_start_buckets(cases, opts.bucket_cap);
  return r;
}

namespace {

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json to_json(const EvalReport& r) {
  json recall = json::object();
  for (const auto& [k, v] : r.recall_at) recall[std::to_string(k)] = v;
  json buckets = json::array();
  for (const auto& b : r.buckets)
    buckets.push_back({{"mentioned_items", b.bucket}, {"count", b.count}, {"share", b.share}, {"recall_at_50", opt_json(b.recall)}});
  return {{"num_examples", r.num_examples},
          {"num_rec_examples", r.num_rec_examples},
          {"recall_at", recall},
          {"perplexity", opt_json(r.perplexity)},
          {"distinct_3", opt_json(r.distinct_3)},
          {"distinct_4", opt_json(r.distinct_4)},
          {"cold_start", buckets}};
}

std::string format_report(const EvalReport& r) {
  auto fmt = [](const std::optional<double>& v, int prec) {
    if (!v) return std::string("-");
    std::ostringstream s;
    s << std::fixed << std::setprecision(prec) << *v;
    return s.str();
  };
  std::ostringstream out;
  out << "Recommendation (" << r.num_rec_examples << " cases)\n";
  for (const auto& [k, v] : r.recall_at) out << "  " << std::left << std::setw(12) << ("R@" + std::to_string(k)) << fmt(v, 4) << '\n';
  out << "Generation (" << r.num_examples << " responses)\n";
  out << "  " << std::left << std::setw(12) << "PPL" << fmt(r.perplexity, 4) << '\n';
  out << "  " << std::left << std::setw(12) << "Dist-3" << fmt(r.distinct_3, 4) << '\n';
  out << "  " << std::left << std::setw(12) << "Dist-4" << fmt(r.distinct_4, 4) << '\n';
  if (!r.buckets.empty()) {
    out << "Mentioned items   share    R@50\n";
    for (const auto& b : r.buckets)
      out << "  " << std::left << std::setw(16) << (std::to_string(b.bucket) + (&b == &r.buckets.back() ? "+" : ""))
          << std::setw(9) << fmt(b.share, 3) << fmt(b.recall, 4) << '\n';
  }
  return out.str();
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw UndefinedMetricError("mean over zero runs");
  CompensatedSum s;
  for (double v : values) s.add(v);
  MeanStd out;
  out.mean = s.value() / static_cast<double>(values.size());
  CompensatedSum sq;
  for (double v : values) sq.add((v - out.mean) * (v - out.mean));
  out.std = std::sqrt(sq.value() / static_cast<double>(values.size()));
  return out;
}

json summarize_runs(const std::vector<EvalReport>& runs) {
  std::map<std::string, std::vector<double>> series;
  for (const auto& r : runs) {
    for (const auto& [k, v] : r.recall_at) series["recall@" + std::to_string(k)].push_back(v);
    if (r.perplexity) series["perplexity"].push_back(*r.perplexity);
    if (r.distinct_3) series["distinct_3"].push_back(*r.distinct_3);
    if (r.distinct_4) series["distinct_4"].push_back(*r.distinct_4);
  }
  json out = {{"runs", runs.size()}, {"interval", "mean +/- population std over runs"}};
  for (const auto& [name, vals] : series) {
    const MeanStd ms = mean_std(vals);
    out["metrics"][name] = {{"mean", ms.mean}, {"std", ms.std}, {"n", vals.size()}};
  }
  return out;
}

}  // namespace kbrd
