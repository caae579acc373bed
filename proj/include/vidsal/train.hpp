#pragma once

// Seeded minibatch training of a VideoModel on a synthetic dataset split.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vidsal/models.hpp"
#include "vidsal/synthetic.hpp"

namespace vidsal::train {

enum class OptimizerKind { Adam, Sgd };

std::string_view optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double momentum = 0.2;  // SGD only
  double weight_decay = 0;
  double label_smoothing = 0;
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  std::uint64_t seed = 7;

  // Adam for the 3D CNN, SGD with momentum 0.2 for the ConvLSTM, label
  // smoothing 0.2 for both.
  static TrainConfig defaults_for(models::ModelKind kind);
  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0;
  double train_accuracy = 0;
  double val_accuracy = 0;
};

struct TrainResult {
  std::unique_ptr<models::VideoModel<float>> model;
  std::vector<EpochStats> history;
  double val_accuracy = 0;
};

TrainResult train_model(const models::ModelConfig& config, const data::DatasetSplit& split, const TrainConfig& train,
                        const std::function<void(const EpochStats&)>& on_epoch = {});

// Trains an existing model in place (used for zero-learning-rate checks).
std::vector<EpochStats> fit(models::VideoModel<float>& model, const data::DatasetSplit& split,
                            const TrainConfig& train, const std::function<void(const EpochStats&)>& on_epoch = {});

struct Evaluation {
  double accuracy = 0;
  std::vector<std::size_t> predictions;
  std::vector<std::vector<float>> scores;
};

Evaluation evaluate(const models::VideoModel<float>& model, const std::vector<data::ClipRecord>& clips);

}  // namespace vidsal::train
