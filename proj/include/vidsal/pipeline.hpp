#pragma once

// The four toolkit commands as library calls: generate a dataset, train a
// model, explain clips (temporal mask + Grad-CAM per clip), compare two
// explanation directories. Every command writes into a staged directory that
// only replaces the target once complete, with one manifest.json listing
// every file it produced.

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vidsal/mask.hpp"
#include "vidsal/metrics.hpp"
#include "vidsal/synthetic.hpp"
#include "vidsal/train.hpp"

namespace vidsal::pipeline {

inline constexpr const char* kToolName = "vidsal";
inline constexpr const char* kToolVersion = "0.1.0";

struct ExplainOptions {
  bool target_true_class = false;  // explain the predicted class by default
  std::size_t count = 40;          // clips taken round-robin over classes
  std::string split = "val";
  std::vector<std::string> clips;  // explicit ids win over count/split
  bool images = true;
};

struct RunConfig {
  data::DatasetOptions data;
  std::map<std::string, std::string> train;  // [train] keys, applied over the model defaults
  mask::MaskConfig mask;
  metrics::SummaryConfig metrics;
  ExplainOptions explain;
};

// Flat INI file with [data], [train], [mask], [metrics] and [explain]
// sections. Unknown sections or keys and unparsable values are ValueErrors.
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);
train::TrainConfig train_config(models::ModelKind kind, const RunConfig& config);

using Progress = std::function<void(const std::string&)>;

// A staged output directory. Files go to a hidden sibling; commit() writes
// the manifest and renames it into place. Dropping an uncommitted stage
// removes it. An existing target is replaced only if it holds a manifest.
class Stage {
 public:
  explicit Stage(std::filesystem::path target);
  ~Stage();
  Stage(const Stage&) = delete;
  Stage& operator=(const Stage&) = delete;

  const std::filesystem::path& dir() const { return dir_; }
  void log(const std::string& line);  // appends to run.log
  // `manifest` may already exist in the stage (datasets, checkpoints); the
  // run block is merged into it.
  void commit(nlohmann::json run);

 private:
  std::filesystem::path target_;
  std::filesystem::path dir_;
  bool committed_ = false;
};

struct RunInfo {
  std::string command;
  nlohmann::json config;
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::filesystem::path> inputs;
};
// Run block for a manifest: inputs relative to the output directory and the
// sorted list of files under `dir`.
nlohmann::json run_block(const RunInfo& info, const std::filesystem::path& dir, const std::filesystem::path& target);

void generate(const RunConfig& config, const std::filesystem::path& out, const Progress& progress = {});

struct TrainSummary {
  double val_accuracy = 0;
  double reversed_accuracy = 0;  // direction-paired val clips played backwards, true label
  double reversed_mirror_rate = 0;  // same clips, predicted as the mirror class
  std::size_t reversed_clips = 0;
};
TrainSummary train(models::ModelKind kind, const std::filesystem::path& dataset, const RunConfig& config,
                   const std::filesystem::path& out, const Progress& progress = {});

// Accuracy on reversed direction-paired clips: fraction still given the
// original label, and fraction given the mirror label.
TrainSummary reversal_check(const models::VideoModel<float>& model, const std::vector<data::ClipRecord>& val,
                            const std::vector<data::MotionClass>& classes);

std::vector<const data::ClipRecord*> select_clips(const data::DatasetSplit& split, const ExplainOptions& options,
                                                  std::size_t num_classes);

struct Explanation {
  std::string clip_id;
  std::size_t true_class = 0;
  std::size_t predicted_class = 0;
  std::vector<double> scores;
  mask::MaskResult mask;
  Tensor<double> saliency;  // [T, H, W]
  metrics::FrameBlobs blobs;
  std::optional<data::EventWindow> event;
};
Explanation explain_clip(const models::VideoModel<float>& model, const data::ClipRecord& clip,
                         const RunConfig& config);
nlohmann::json to_json(const Explanation& e, const std::string& model, const std::vector<std::string>& class_names);

// Called once per explained clip, serialized, with the CPU time of the
// explaining thread.
using ClipHook = std::function<void(const Explanation&, double cpu_seconds)>;

void explain(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset, const RunConfig& config,
             const std::filesystem::path& out, std::size_t jobs = 1, const Progress& progress = {},
             const ClipHook& on_clip = {});

// Per-sequence metrics from one explanation directory.
std::vector<metrics::SequenceMetrics> load_sequences(const std::filesystem::path& dir,
                                                     const metrics::SummaryConfig& config);

metrics::MetricsSummary compare(const std::filesystem::path& a, const std::filesystem::path& b,
                                const RunConfig& config, const std::filesystem::path& out,
                                const Progress& progress = {});

}  // namespace vidsal::pipeline
