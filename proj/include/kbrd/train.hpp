// Joint optimization of the recommender and dialog objectives.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "kbrd/corpus.hpp"
#include "kbrd/model.hpp"
#include "kbrd/optim.hpp"

namespace kbrd {

struct TrainConfig {
  std::uint64_t seed = 0;
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double lr_rec = 0.003;
  double lr_dialog = 0.001;
  AdamOptions adam;
  double clip_norm = 0.1;
  double lambda_rec = 1.0;
  /// When false only the recommendation loss is optimized and the decoder is
  /// never run.
  bool train_dialog = true;
  std::size_t min_word_count = 1;
  std::string checkpoint_path;  // written after every epoch when non-empty
  ModelConfig model;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Keys absent from `j` keep the values of `base`; unknown keys are errors.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
TrainConfig load_train_config(const std::string& path, TrainConfig base = {});

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double mean_dialog_nll = 0.0;  // per target symbol
  double mean_rec_loss = 0.0;    // per supervised example
  double mean_grad_norm = 0.0;   // before clipping
  std::size_t steps = 0;
};

struct TrainingDivergedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  Adam optimizer;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Builds the two-group optimizer: recommender parameters at lr_rec, dialog
/// parameters at lr_dialog.
Adam make_optimizer(const KbrdModel& model, const TrainConfig& cfg);

/// Batches of example indices grouped by history length. Order depends only
/// on `seed` and the epoch.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<TrainingExample>& examples,
                                                   std::size_t batch_size, std::uint64_t seed, std::size_t epoch);

struct BatchLoss {
  Tensor total;
  double dialog_nll = 0.0;
  std::size_t dialog_tokens = 0;
  double rec_loss = 0.0;
  std::size_t rec_examples = 0;
};

/// dialog NLL / dialog tokens + lambda_rec * mean recommendation loss.
BatchLoss batch_loss(const KbrdModel& model, const std::vector<TrainingExample>& examples,
                     const std::vector<std::size_t>& batch, const TrainConfig& cfg, bool training, Rng* rng);

TrainResult train(KbrdModel& model, const std::vector<TrainingExample>& examples, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

}  // namespace kbrd
