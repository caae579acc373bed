#pragma once

// Two small video classifiers sharing one interface: a 3D CNN and a stacked
// convolutional LSTM. Both map a clip [T, H, W, C] to class logits and expose
// the activations Grad-CAM differentiates against.

#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vidsal/autodiff.hpp"
#include "vidsal/ops.hpp"

namespace vidsal::models {

enum class ModelKind { Conv3D, ConvLstm };

std::string_view kind_name(ModelKind kind);  // "conv3d" / "convlstm"
ModelKind parse_kind(std::string_view name);

struct ConvLayerSpec {
  ad::Int3 kernel{3, 3, 3};
  ad::Int3 stride{1, 1, 1};
  ad::Int3 padding{1, 1, 1};
  std::size_t channels = 8;
};

struct ModelConfig {
  ModelKind kind = ModelKind::Conv3D;
  std::size_t frames = 16;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 1;
  std::size_t num_classes = 8;

  // 3D CNN; the last layer's output is the Grad-CAM target.
  std::vector<ConvLayerSpec> conv_layers{
      {{3, 5, 5}, {1, 2, 2}, {1, 2, 2}, 8},
      {{3, 3, 3}, {2, 2, 2}, {1, 1, 1}, 16},
      {{3, 3, 3}, {1, 1, 1}, {1, 1, 1}, 32},
  };

  // ConvLSTM
  std::size_t lstm_layers = 2;
  std::size_t lstm_filters = 16;
  std::size_t lstm_kernel = 5;
  std::size_t lstm_stride = 2;
  std::size_t lstm_pool = 2;
  double forget_bias = 1.0;
  double bn_momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch
  double bn_eps = 1e-5;

  Shape input_shape() const { return {frames, height, width, channels}; }
  void validate() const;  // throws ValueError
};

template <class Real>
using ParamMap = std::map<std::string, Tensor<Real>>;

template <class To, class From>
ParamMap<To> cast_params(const ParamMap<From>& params) {
  ParamMap<To> out;
  for (const auto& [name, t] : params) out.emplace(name, t.template cast<To>());
  return out;
}

template <class Real>
struct BatchNormStats {
  std::string layer;  // prefix of the running-stat buffers
  Tensor<Real> mean;
  Tensor<Real> variance;  // biased
  std::size_t count = 0;  // values per channel
};

template <class Real>
struct ForwardResult {
  std::vector<ad::Var<Real>> logits;       // [num_classes] per clip
  std::vector<ad::Var<Real>> activations;  // Grad-CAM target per clip, [T', H', W', C']
  // Recurrent models: the per-timestep nodes that were stacked into
  // activations, [1, H', W', C'] each. Their gradients include the paths
  // through later timesteps.
  std::vector<std::vector<ad::Var<Real>>> activation_steps;
  std::map<std::string, ad::Var<Real>> params;
  std::vector<BatchNormStats<Real>> batch_stats;  // training mode only
};

enum class Mode { Eval, Train };

template <class Real>
class VideoModel {
 public:
  VideoModel(ModelConfig config, ParamMap<Real> params, ParamMap<Real> buffers);
  virtual ~VideoModel() = default;

  const ModelConfig& config() const { return config_; }
  ModelKind kind() const { return config_.kind; }
  std::size_t num_classes() const { return config_.num_classes; }

  const ParamMap<Real>& params() const { return params_; }
  ParamMap<Real>& params() { return params_; }
  const ParamMap<Real>& buffers() const { return buffers_; }
  ParamMap<Real>& buffers() { return buffers_; }

  // Binds the parameters onto the tape (as gradient leaves when
  // param_grads is set) and runs every clip. Clips must match the configured
  // input shape.
  ForwardResult<Real> forward(ad::Tape<Real>& tape, std::span<const ad::Var<Real>> clips, Mode mode,
                              bool param_grads = false) const;

  // Grad-CAM timestep covering each input frame.
  virtual std::vector<std::size_t> step_of_frame() const = 0;

  // Eval-mode softmax scores of one clip.
  std::vector<Real> predict(const Tensor<Real>& clip) const;

  // Folds training-mode batch statistics into the running averages.
  void update_running_stats(const std::vector<BatchNormStats<Real>>& stats);

 protected:
  virtual ForwardResult<Real> run(ad::Tape<Real>& tape, std::span<const ad::Var<Real>> clips, Mode mode,
                                  const std::map<std::string, ad::Var<Real>>& p) const = 0;

  ModelConfig config_;
  ParamMap<Real> params_;
  ParamMap<Real> buffers_;
};

template <class Real>
class Conv3DNet final : public VideoModel<Real> {
 public:
  using VideoModel<Real>::VideoModel;
  std::vector<std::size_t> step_of_frame() const override;
  // Output shape of every conv layer.
  std::vector<Shape> layer_shapes() const;

 protected:
  ForwardResult<Real> run(ad::Tape<Real>& tape, std::span<const ad::Var<Real>> clips, Mode mode,
                          const std::map<std::string, ad::Var<Real>>& p) const override;
};

template <class Real>
struct ConvLstmState {
  ad::Var<Real> h;  // [1, H', W', F]
  ad::Var<Real> c;
};

template <class Real>
class ConvLstmNet final : public VideoModel<Real> {
 public:
  using VideoModel<Real>::VideoModel;
  std::vector<std::size_t> step_of_frame() const override;

  // One recurrence step. x_gates is the input contribution conv(x) + bias,
  // [1, H', W', 4F] in gate order i, f, o, g; wh is [1, k, k, F, 4F].
  // A missing state means h = c = 0.
  static ConvLstmState<Real> step(ad::Var<Real> x_gates, const ConvLstmState<Real>* state, ad::Var<Real> wh,
                                  std::size_t filters, std::size_t kernel);

 protected:
  ForwardResult<Real> run(ad::Tape<Real>& tape, std::span<const ad::Var<Real>> clips, Mode mode,
                          const std::map<std::string, ad::Var<Real>>& p) const override;
};

// Randomly initialised parameters and identity running statistics.
template <class Real>
std::unique_ptr<VideoModel<Real>> init_model(const ModelConfig& config, std::uint64_t seed);

template <class Real>
std::unique_ptr<VideoModel<Real>> make_model(const ModelConfig& config, ParamMap<Real> params,
                                             ParamMap<Real> buffers);

// Expected parameter and buffer shapes for a configuration.
std::map<std::string, Shape> parameter_shapes(const ModelConfig& config);
std::map<std::string, Shape> buffer_shapes(const ModelConfig& config);

extern template class VideoModel<float>;
extern template class VideoModel<double>;
extern template class Conv3DNet<float>;
extern template class Conv3DNet<double>;
extern template class ConvLstmNet<float>;
extern template class ConvLstmNet<double>;

}  // namespace vidsal::models
