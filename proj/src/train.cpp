#include "vidsal/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "vidsal/optim.hpp"

namespace vidsal::train {

std::string_view optimizer_name(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "sgd") return OptimizerKind::Sgd;
  throw ValueError("unknown optimizer '" + std::string(name) + "' (expected adam or sgd)");
}

TrainConfig TrainConfig::defaults_for(models::ModelKind kind) {
  TrainConfig c;
  if (kind == models::ModelKind::Conv3D) {
    c.optimizer = OptimizerKind::Adam;
    c.learning_rate = 2e-3;
    c.epochs = 12;
  } else {
    c.optimizer = OptimizerKind::Sgd;
    c.learning_rate = 0.05;
    c.momentum = 0.2;
    c.epochs = 12;
  }
  c.label_smoothing = 0.2;
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) throw ValueError("train: learning rate must be >= 0");
  if (!(momentum >= 0 && momentum < 1)) throw ValueError("train: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0)) throw ValueError("train: weight decay must be >= 0");
  if (!(label_smoothing >= 0 && label_smoothing < 1)) throw ValueError("train: label smoothing must lie in [0, 1)");
  if (epochs == 0) throw ValueError("train: epochs must be >= 1");
  if (batch_size == 0) throw ValueError("train: batch size must be >= 1");
}

Evaluation evaluate(const models::VideoModel<float>& model, const std::vector<data::ClipRecord>& clips) {
  Evaluation e;
  std::size_t correct = 0;
  for (const auto& clip : clips) {
    auto scores = model.predict(clip.frames);
    const auto pred = std::size_t(std::max_element(scores.begin(), scores.end()) - scores.begin());
    correct += pred == clip.label_index ? 1 : 0;
    e.predictions.push_back(pred);
    e.scores.push_back(std::move(scores));
  }
  e.accuracy = clips.empty() ? 0.0 : double(correct) / double(clips.size());
  return e;
}

std::vector<EpochStats> fit(models::VideoModel<float>& model, const data::DatasetSplit& split,
                            const TrainConfig& cfg, const std::function<void(const EpochStats&)>& on_epoch) {
  cfg.validate();
  if (split.train.empty()) throw ValueError("train: empty training split");
  for (const auto* part : {&split.train, &split.val})
    for (const auto& clip : *part) {
      if (clip.label_index >= model.num_classes()) {
        throw ValueError("train: clip " + clip.id + " has label " + std::to_string(clip.label_index) +
                         " but the model has " + std::to_string(model.num_classes()) + " classes");
      }
    }

  optim::Adam adam({cfg.learning_rate});
  optim::SgdMomentum sgd(cfg.learning_rate, cfg.momentum);
  std::vector<EpochStats> history;
  std::vector<std::size_t> order(split.train.size());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), std::mt19937_64(data::derive_seed(cfg.seed, epoch, 0x7a1)));
    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) try {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      ad::Tape<float> tape;
      std::vector<ad::Var<float>> clips;
      for (std::size_t i = start; i < end; ++i) clips.push_back(tape.constant(split.train[order[i]].frames));
      auto result = model.forward(tape, clips, models::Mode::Train, true);

      std::vector<ad::Var<float>> losses;
      for (std::size_t b = 0; b < clips.size(); ++b) {
        const auto& rec = split.train[order[start + b]];
        auto ce = ad::softmax_cross_entropy(result.logits[b], rec.label_index);
        if (cfg.label_smoothing > 0) {
          // (1 - e) * CE(y) + e / K * sum_k CE(k)
          const std::size_t K = model.num_classes();
          std::vector<ad::Var<float>> all;
          for (std::size_t k = 0; k < K; ++k)
            all.push_back(ad::reshape(ad::softmax_cross_entropy(result.logits[b], k), Shape{1}));
          const auto uniform = ad::mean(ad::concat_front(std::span<const ad::Var<float>>(all)));
          ce = ad::add(ad::scale(ce, float(1 - cfg.label_smoothing)), ad::scale(uniform, float(cfg.label_smoothing)));
        }
        losses.push_back(ad::reshape(ce, Shape{1}));
        const auto& lv = result.logits[b].value().vector();
        correct += std::size_t(std::max_element(lv.begin(), lv.end()) - lv.begin()) == rec.label_index ? 1 : 0;
      }
      const auto loss = ad::mean(ad::concat_front(std::span<const ad::Var<float>>(losses)));
      const float lv = loss.value().item();
      if (!std::isfinite(lv)) {
        throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch starting at " +
                              std::to_string(start));
      }
      loss_sum += double(lv) * double(clips.size());

      const auto grads = ad::backward(tape, loss);
      for (auto& [name, param] : model.params()) {
        const Tensor<float>* g = grads.find(result.params.at(name));
        if (!g) continue;
        Tensor<float> grad = *g;
        if (cfg.weight_decay > 0) {
          for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += float(cfg.weight_decay) * param[i];
        }
        if (!grad.all_finite()) {
          throw DivergenceError("train: non-finite gradient for " + name + " at epoch " + std::to_string(epoch + 1));
        }
        if (cfg.optimizer == OptimizerKind::Adam) {
          adam.step<float>(name, param.data(), grad.data());
        } else {
          sgd.step<float>(name, param.data(), grad.data());
        }
      }
      model.update_running_stats(result.batch_stats);
    } catch (const NonFiniteError& e) {
      throw DivergenceError("train: " + std::string(e.what()) + " at epoch " + std::to_string(epoch + 1) +
                            ", batch starting at " + std::to_string(start));
    }
    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.train_loss = loss_sum / double(order.size());
    stats.train_accuracy = double(correct) / double(order.size());
    stats.val_accuracy = split.val.empty() ? 0.0 : evaluate(model, split.val).accuracy;
    history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return history;
}

TrainResult train_model(const models::ModelConfig& config, const data::DatasetSplit& split, const TrainConfig& cfg,
                        const std::function<void(const EpochStats&)>& on_epoch) {
  TrainResult r;
  r.model = models::init_model<float>(config, cfg.seed);
  r.history = fit(*r.model, split, cfg, on_epoch);
  r.val_accuracy = r.history.back().val_accuracy;
  return r;
}

}  // namespace vidsal::train
