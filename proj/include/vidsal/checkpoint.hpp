#pragma once

// Model checkpoints on disk: a directory holding manifest.json plus one VTEN
// file per parameter and running-statistic buffer.

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "vidsal/models.hpp"
#include "vidsal/train.hpp"

namespace vidsal::io {

struct TrainingMeta {
  train::TrainConfig train;
  std::vector<train::EpochStats> history;
  double val_accuracy = 0;
  std::vector<std::string> class_names;  // position = label index
  std::string dataset;                   // path the model was trained on, informational
};

struct Checkpoint {
  models::ModelConfig config;
  models::ParamMap<float> params;
  models::ParamMap<float> buffers;
  TrainingMeta meta;
};

nlohmann::json to_json(const models::ModelConfig& config);
models::ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const train::TrainConfig& config);
train::TrainConfig train_config_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& dir);  // throws IoError / ValueError

std::unique_ptr<models::VideoModel<float>> model_from_checkpoint(const Checkpoint& checkpoint);

// Shared helpers for JSON files written by the toolkit.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace vidsal::io
