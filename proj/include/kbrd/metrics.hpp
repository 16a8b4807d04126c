// Evaluation metrics: Recall@K, perplexity, distinct-n, cold-start buckets
// and top vocabulary-bias words.
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kbrd/corpus.hpp"
#include "kbrd/model.hpp"
#include "kbrd/recommender.hpp"
#include "kbrd/vocab.hpp"

namespace kbrd {

/// 1 when gold is among the first k ranked items. k larger than the list
/// covers the whole list.
int recall_at_k(std::span<const RankedItem> ranked, EntityId gold, std::size_t k);

/// Mean of recall_at_k over cases.
double mean_recall(const std::vector<std::vector<RankedItem>>& rankings, const std::vector<EntityId>& golds,
                   std::size_t k);

/// Neumaier-compensated sum, independent of input order up to rounding.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// exp(-sum log p / token count) over every token of every sequence.
double perplexity(const std::vector<std::vector<double>>& token_log_probs);

/// Sentence-level distinct-n: mean over sentences with at least one n-gram of
/// unique / total n-grams. Returns 0 when no sentence is long enough.
double distinct_n(const std::vector<std::vector<std::string>>& responses, std::size_t n);

struct BucketRow {
  std::size_t bucket = 0;  // number of mentioned items; the last bucket holds >= cap
  std::size_t count = 0;
  double share = 0.0;
  std::optional<double> recall;  // empty when no example in the bucket has a gold item
};

struct BucketCase {
  std::size_t mentioned_items = 0;
  std::optional<int> hit;  // recall indicator when the case has a gold item
};

/// Groups cases by mentioned-item count (capped) and reports each bucket's
/// share of the population and mean recall.
std::vector<BucketRow> cold_start_buckets(const std::vector<BucketCase>& cases, std::size_t cap = 5);

/// Packaged stopword list.
const std::set<std::string>& default_stopwords();
std::set<std::string> parse_stopwords(const std::string& text);

struct BiasWord {
  SymbolId id = 0;
  std::string word;
  double bias = 0.0;
};

/// Top-k components of a bias vector after dropping reserved symbols and
/// stopwords. Descending by value, ties by ascending id.
std::vector<BiasWord> top_bias_words(std::span<const double> bias, const Vocabulary& vocab,
                                     const std::set<std::string>& stopwords, std::size_t k);

/// Bias words for a context of the model.
std::vector<BiasWord> top_bias_words(const KbrdModel& model, const UserContext& ctx, std::size_t k,
                                     const std::set<std::string>& stopwords = default_stopwords());
/// Bias words for a single entity; unknown names raise LookupError.
std::vector<BiasWord> top_bias_words_for_entity(const KbrdModel& model, const std::string& entity, std::size_t k,
                                                const std::set<std::string>& stopwords = default_stopwords());

struct EvalOptions {
  std::vector<std::size_t> ks{1, 10, 50};
  bool generate_responses = true;
  std::size_t bucket_cap = 5;
};

struct EvalReport {
  std::size_t num_examples = 0;
  std::size_t num_rec_examples = 0;
  std::map<std::size_t, double> recall_at;  // empty without gold items
  std::optional<double> perplexity;
  std::optional<double> distinct_3;
  std::optional<double> distinct_4;
  std::vector<BucketRow> buckets;
};

EvalReport evaluate(const KbrdModel& model, const std::vector<TrainingExample>& examples,
                    const EvalOptions& opts = {});

nlohmann::json to_json(const EvalReport& r);
/// Aligned text table.
std::string format_report(const EvalReport& r);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};
MeanStd mean_std(std::span<const double> values);

/// Mean and standard deviation over runs (e.g. seeds) of every scalar metric.
nlohmann::json summarize_runs(const std::vector<EvalReport>& runs);

}  // namespace kbrd
