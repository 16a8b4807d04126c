#include "kbrd/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "kbrd/checkpoint.hpp"

namespace kbrd {

using nlohmann::json;

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(lr_rec > 0.0) || !(lr_dialog > 0.0)) throw ConfigError("learning rates must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (!(lambda_rec >= 0.0)) throw ConfigError("lambda_rec must be non-negative");
  if (adam.beta1 < 0.0 || adam.beta1 >= 1.0 || adam.beta2 < 0.0 || adam.beta2 >= 1.0)
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(adam.eps > 0.0)) throw ConfigError("Adam epsilon must be positive");
  model.validate();
}

json to_json(const TrainConfig& c) {
  return json{{"seed", c.seed},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"lr_rec", c.lr_rec},
              {"lr_dialog", c.lr_dialog},
              {"adam_beta1", c.adam.beta1},
              {"adam_beta2", c.adam.beta2},
              {"adam_eps", c.adam.eps},
              {"clip_norm", c.clip_norm},
              {"lambda_rec", c.lambda_rec},
              {"train_dialog", c.train_dialog},
              {"min_word_count", c.min_word_count},
              {"checkpoint_path", c.checkpoint_path},
              {"model", to_json(c.model)}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known{"seed",       "epochs",       "batch_size",     "lr_rec",
                                           "lr_dialog",  "adam_beta1",   "adam_beta2",     "adam_eps",
                                           "clip_norm",  "lambda_rec",   "train_dialog",   "min_word_count",
                                           "checkpoint_path", "model"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ConfigError("unknown config key '" + it.key() + "'");
  auto read = [&](const char* key, auto& out) {
    if (auto it = j.find(key); it != j.end()) {
      try {
        out = it->get<std::decay_t<decltype(out)>>();
      } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
      }
    }
  };
  read("seed", c.seed);
  read("epochs", c.epochs);
  read("batch_size", c.batch_size);
  read("lr_rec", c.lr_rec);
  read("lr_dialog", c.lr_dialog);
  read("adam_beta1", c.adam.beta1);
  read("adam_beta2", c.adam.beta2);
  read("adam_eps", c.adam.eps);
  read("clip_norm", c.clip_norm);
  read("lambda_rec", c.lambda_rec);
  read("train_dialog", c.train_dialog);
  read("min_word_count", c.min_word_count);
  read("checkpoint_path", c.checkpoint_path);
  if (auto it = j.find("model"); it != j.end()) c.model = model_config_from_json(*it, c.model);
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::string& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return train_config_from_json(j, std::move(base));
}

Adam make_optimizer(const KbrdModel& model, const TrainConfig& cfg) {
  Adam opt(cfg.adam);
  opt.add_group("recommender", model.recommender_params(), cfg.lr_rec);
  opt.add_group("dialog", model.dialog_params(), cfg.lr_dialog);
  return opt;
}

std::vector<std::vector<std::size_t>> make_batches(const std::vector<TrainingExample>& examples,
                                                   std::size_t batch_size, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return examples[a].history_symbols.size() < examples[b].history_symbols.size();
  });
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
  Rng rng(seed * 0x9E3779B97F4A7C15ULL + epoch);
  rng.shuffle(batches);
  return batches;
}

BatchLoss batch_loss(const KbrdModel& model, const std::vector<TrainingExample>& examples,
                     const std::vector<std::size_t>& batch, const TrainConfig& cfg, bool training, Rng* rng) {
  BatchLoss out;
  const Tensor reps = model.entity_representations(training, rng);
  std::vector<Tensor> nll_terms, rec_terms;
  for (std::size_t idx : batch) {
    ExampleLoss el = model.example_loss(examples.at(idx), reps, cfg.train_dialog, training, rng);
    if (el.dialog_nll.defined()) {
      nll_terms.push_back(el.dialog_nll);
      out.dialog_tokens += el.dialog_tokens;
    }
    if (el.rec_loss.defined()) rec_terms.push_back(el.rec_loss);
  }
  Tensor total;
  if (!nll_terms.empty() && out.dialog_tokens > 0) {
    Tensor s = nll_terms.front();
    for (std::size_t i = 1; i < nll_terms.size(); ++i) s = add(s, nll_terms[i]);
    out.dialog_nll = s.item();
    total = scale(s, 1.0 / static_cast<double>(out.dialog_tokens));
  }
  if (!rec_terms.empty()) {
    Tensor s = rec_terms.front();
    for (std::size_t i = 1; i < rec_terms.size(); ++i) s = add(s, rec_terms[i]);
    out.rec_examples = rec_terms.size();
    out.rec_loss = s.item();
    Tensor rec = scale(s, cfg.lambda_rec / static_cast<double>(rec_terms.size()));
    total = total.defined() ? add(total, rec) : rec;
  }
  out.total = total.defined() ? total : Tensor::scalar(0.0);
  return out;
}

TrainResult train(KbrdModel& model, const std::vector<TrainingExample>& examples, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  TrainResult result{{}, make_optimizer(model, cfg)};
  Adam& opt = result.optimizer;
  std::vector<NamedParam> params = opt.params();
  Rng dropout_rng(cfg.seed ^ 0xD1B54A32D192ED03ULL);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    double loss_sum = 0.0, nll_sum = 0.0, rec_sum = 0.0, norm_sum = 0.0;
    std::size_t tokens = 0, rec_count = 0;
    for (const auto& batch : make_batches(examples, cfg.batch_size, cfg.seed, epoch)) {
      opt.zero_grad();
      BatchLoss bl = batch_loss(model, examples, batch, cfg, true, &dropout_rng);
      const double loss = bl.total.item();
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", step " << opt.steps() + 1 << " (dialog nll "
            << bl.dialog_nll << " over " << bl.dialog_tokens << " tokens, rec loss " << bl.rec_loss << " over "
            << bl.rec_examples << " examples)";
        throw TrainingDivergedError(msg.str());
      }
      if (bl.total.requires_grad()) bl.total.backward();
      norm_sum += clip_gradients(params, cfg.clip_norm);
      try {
        opt.step();
      } catch (const NonFiniteGradientError& e) {
        throw TrainingDivergedError("epoch " + std::to_string(epoch) + ", step " + std::to_string(opt.steps() + 1) +
                                    ": " + e.what());
      }
      loss_sum += loss;
      nll_sum += bl.dialog_nll;
      tokens += bl.dialog_tokens;
      rec_sum += bl.rec_loss;
      rec_count += bl.rec_examples;
      ++log.steps;
    }
    opt.zero_grad();
    if (log.steps) {
      log.mean_loss = loss_sum / static_cast<double>(log.steps);
      log.mean_grad_norm = norm_sum / static_cast<double>(log.steps);
    }
    if (tokens) log.mean_dialog_nll = nll_sum / static_cast<double>(tokens);
    if (rec_count) log.mean_rec_loss = rec_sum / static_cast<double>(rec_count);
    result.epochs.push_back(log);
    if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path, model, &opt);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

}  // namespace kbrd
