#include "vidsal/models.hpp"

#include <cmath>
#include <optional>
#include <random>

#include "vidsal/synthetic.hpp"

namespace vidsal::models {
namespace {

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  if (stride == 0 || k > in + 2 * pad) {
    throw ValueError("model config: kernel " + std::to_string(k) + " does not fit extent " + std::to_string(in) +
                     " with padding " + std::to_string(pad));
  }
  return (in + 2 * pad - k) / stride + 1;
}

std::string layer_name(const char* prefix, std::size_t index) { return prefix + std::to_string(index + 1); }

struct LstmGeometry {
  std::size_t in_h, in_w, in_c;  // layer input
  std::size_t h, w;              // state extent
  std::size_t out_h, out_w;      // after pooling
};

std::vector<LstmGeometry> lstm_geometry(const ModelConfig& c) {
  std::vector<LstmGeometry> out;
  std::size_t H = c.height, W = c.width, C = c.channels;
  const std::size_t pad = c.lstm_kernel / 2;
  for (std::size_t l = 0; l < c.lstm_layers; ++l) {
    LstmGeometry g{H, W, C, 0, 0, 0, 0};
    g.h = conv_out(H, c.lstm_kernel, c.lstm_stride, pad);
    g.w = conv_out(W, c.lstm_kernel, c.lstm_stride, pad);
    if (g.h < c.lstm_pool || g.w < c.lstm_pool) {
      throw ValueError("model config: convlstm layer " + std::to_string(l + 1) + " state " + std::to_string(g.h) +
                       "x" + std::to_string(g.w) + " is smaller than the pooling window");
    }
    g.out_h = g.h / c.lstm_pool;
    g.out_w = g.w / c.lstm_pool;
    out.push_back(g);
    H = g.out_h;
    W = g.out_w;
    C = c.lstm_filters;
  }
  return out;
}

std::vector<Shape> conv_shapes(const ModelConfig& c) {
  std::vector<Shape> out;
  Shape s = c.input_shape();
  for (const auto& layer : c.conv_layers) {
    s = {conv_out(s[0], layer.kernel[0], layer.stride[0], layer.padding[0]),
         conv_out(s[1], layer.kernel[1], layer.stride[1], layer.padding[1]),
         conv_out(s[2], layer.kernel[2], layer.stride[2], layer.padding[2]), layer.channels};
    out.push_back(s);
  }
  return out;
}

template <class Real>
Tensor<Real> uniform_tensor(const Shape& shape, double bound, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<Real> t(shape);
  for (auto& v : t.data()) v = static_cast<Real>(dist(rng));
  return t;
}

}  // namespace

std::string_view kind_name(ModelKind kind) { return kind == ModelKind::Conv3D ? "conv3d" : "convlstm"; }

ModelKind parse_kind(std::string_view name) {
  if (name == "conv3d") return ModelKind::Conv3D;
  if (name == "convlstm") return ModelKind::ConvLstm;
  throw ValueError("unknown model kind '" + std::string(name) + "' (expected conv3d or convlstm)");
}

void ModelConfig::validate() const {
  if (frames == 0 || height == 0 || width == 0 || channels == 0) throw ValueError("model config: empty input shape");
  if (num_classes < 2) throw ValueError("model config: need at least 2 classes");
  if (kind == ModelKind::Conv3D) {
    if (conv_layers.empty()) throw ValueError("model config: conv3d needs at least one layer");
    for (const auto& l : conv_layers)
      if (l.channels == 0) throw ValueError("model config: conv layer with 0 channels");
    conv_shapes(*this);
  } else {
    if (lstm_layers == 0 || lstm_filters == 0 || lstm_kernel == 0 || lstm_kernel % 2 == 0 || lstm_pool == 0) {
      throw ValueError("model config: convlstm needs >= 1 layer, >= 1 filter, an odd kernel and a pool >= 1");
    }
    if (!(bn_momentum >= 0 && bn_momentum < 1) || !(bn_eps > 0)) {
      throw ValueError("model config: batch-norm momentum must lie in [0, 1) and eps be positive");
    }
    lstm_geometry(*this);
  }
}

std::map<std::string, Shape> parameter_shapes(const ModelConfig& c) {
  c.validate();
  std::map<std::string, Shape> shapes;
  if (c.kind == ModelKind::Conv3D) {
    std::size_t cin = c.channels;
    for (std::size_t l = 0; l < c.conv_layers.size(); ++l) {
      const auto& spec = c.conv_layers[l];
      const std::string name = layer_name("conv", l);
      shapes[name + ".weight"] = {spec.kernel[0], spec.kernel[1], spec.kernel[2], cin, spec.channels};
      shapes[name + ".bias"] = {spec.channels};
      cin = spec.channels;
    }
    shapes["fc.weight"] = {cin, c.num_classes};
  } else {
    const auto geo = lstm_geometry(c);
    const std::size_t F = c.lstm_filters, k = c.lstm_kernel;
    for (std::size_t l = 0; l < c.lstm_layers; ++l) {
      const std::string lstm = layer_name("lstm", l), bn = layer_name("bn", l);
      shapes[lstm + ".wx"] = {1, k, k, geo[l].in_c, 4 * F};
      shapes[lstm + ".wh"] = {1, k, k, F, 4 * F};
      shapes[lstm + ".bias"] = {4 * F};
      shapes[bn + ".gamma"] = {F};
      shapes[bn + ".beta"] = {F};
    }
    shapes["fc.weight"] = {geo.back().out_h * geo.back().out_w * F, c.num_classes};
  }
  shapes["fc.bias"] = {c.num_classes};
  return shapes;
}

std::map<std::string, Shape> buffer_shapes(const ModelConfig& c) {
  std::map<std::string, Shape> shapes;
  if (c.kind == ModelKind::ConvLstm) {
    for (std::size_t l = 0; l < c.lstm_layers; ++l) {
      const std::string bn = layer_name("bn", l);
      shapes[bn + ".running_mean"] = {c.lstm_filters};
      shapes[bn + ".running_var"] = {c.lstm_filters};
    }
  }
  return shapes;
}

template <class Real>
VideoModel<Real>::VideoModel(ModelConfig config, ParamMap<Real> params, ParamMap<Real> buffers)
    : config_(std::move(config)), params_(std::move(params)), buffers_(std::move(buffers)) {
  auto check = [](const char* what, const std::map<std::string, Shape>& expected, const ParamMap<Real>& got) {
    if (expected.size() != got.size()) {
      throw ValueError(std::string("model: expected ") + std::to_string(expected.size()) + " " + what + ", got " +
                       std::to_string(got.size()));
    }
    for (const auto& [name, shape] : expected) {
      auto it = got.find(name);
      if (it == got.end()) throw ValueError(std::string("model: missing ") + what + " '" + name + "'");
      if (it->second.shape() != shape) {
        throw ShapeError("model: " + name + " has shape " + shape_string(it->second.shape()) + ", expected " +
                         shape_string(shape));
      }
    }
  };
  check("parameters", parameter_shapes(config_), params_);
  check("buffers", buffer_shapes(config_), buffers_);
}

template <class Real>
ForwardResult<Real> VideoModel<Real>::forward(ad::Tape<Real>& tape, std::span<const ad::Var<Real>> clips, Mode mode,
                                              bool param_grads) const {
  if (clips.empty()) throw ValueError("model: empty batch");
  const Shape expected = config_.input_shape();
  for (const auto& c : clips) {
    if (c.shape() != expected) {
      throw ShapeError(std::string(kind_name(kind())) + " expects clips " + shape_string(expected) + ", got " +
                       shape_string(c.shape()));
    }
  }
  std::map<std::string, ad::Var<Real>> bound;
  for (const auto& [name, t] : params_) bound.emplace(name, tape.leaf(t, param_grads));
  ForwardResult<Real> result = run(tape, clips, mode, bound);
  result.params = std::move(bound);
  return result;
}

template <class Real>
std::vector<Real> VideoModel<Real>::predict(const Tensor<Real>& clip) const {
  ad::Tape<Real> tape;
  const ad::Var<Real> x = tape.constant(clip);
  const auto result = forward(tape, std::span<const ad::Var<Real>>(&x, 1), Mode::Eval);
  return ad::softmax(result.logits[0]).value().vector();
}

template <class Real>
void VideoModel<Real>::update_running_stats(const std::vector<BatchNormStats<Real>>& stats) {
  const Real m = static_cast<Real>(config_.bn_momentum);
  for (const auto& s : stats) {
    auto& mean = buffers_.at(s.layer + ".running_mean");
    auto& var = buffers_.at(s.layer + ".running_var");
    const Real unbias = s.count > 1 ? Real(s.count) / Real(s.count - 1) : Real(1);
    for (std::size_t i = 0; i < mean.size(); ++i) {
      mean[i] = m * mean[i] + (Real(1) - m) * s.mean[i];
      var[i] = m * var[i] + (Real(1) - m) * s.variance[i] * unbias;
    }
  }
}

template <class Real>
std::vector<Shape> Conv3DNet<Real>::layer_shapes() const {
  return conv_shapes(this->config_);
}

template <class Real>
std::vector<std::size_t> Conv3DNet<Real>::step_of_frame() const {
  const std::size_t T = this->config_.frames, steps = layer_shapes().back()[0];
  std::vector<std::size_t> map(T);
  for (std::size_t i = 0; i < T; ++i) map[i] = std::min(steps - 1, i * steps / T);
  return map;
}

template <class Real>
ForwardResult<Real> Conv3DNet<Real>::run(ad::Tape<Real>&, std::span<const ad::Var<Real>> clips, Mode,
                                         const std::map<std::string, ad::Var<Real>>& p) const {
  ForwardResult<Real> result;
  const auto& layers = this->config_.conv_layers;
  for (const auto& clip : clips) {
    ad::Var<Real> h = clip;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string name = layer_name("conv", l);
      h = ad::relu(ad::add_channel_bias(ad::conv3d(h, p.at(name + ".weight"), layers[l].stride, layers[l].padding),
                                        p.at(name + ".bias")));
    }
    result.activations.push_back(h);
    result.logits.push_back(ad::linear(ad::mean_leading(h), p.at("fc.weight"), p.at("fc.bias")));
  }
  return result;
}

template <class Real>
std::vector<std::size_t> ConvLstmNet<Real>::step_of_frame() const {
  std::vector<std::size_t> map(this->config_.frames);
  for (std::size_t i = 0; i < map.size(); ++i) map[i] = i;
  return map;
}

template <class Real>
ConvLstmState<Real> ConvLstmNet<Real>::step(ad::Var<Real> x_gates, const ConvLstmState<Real>* state,
                                            ad::Var<Real> wh, std::size_t filters, std::size_t kernel) {
  const std::size_t F = filters, pad = kernel / 2;
  ad::Var<Real> z = x_gates;
  if (state) z = ad::add(z, ad::conv3d(state->h, wh, {1, 1, 1}, {0, pad, pad}));
  if (z.shape().back() != 4 * F) {
    throw ShapeError("convlstm step: gate pre-activations " + shape_string(z.shape()) + " for " +
                     std::to_string(F) + " filters");
  }
  const auto i = ad::sigmoid(ad::slice_last(z, 0, F));
  const auto f = ad::sigmoid(ad::slice_last(z, F, F));
  const auto o = ad::sigmoid(ad::slice_last(z, 2 * F, F));
  const auto g = ad::tanh(ad::slice_last(z, 3 * F, F));
  if (state && state->c.shape() != i.shape()) {
    throw ShapeError("convlstm step: cell " + shape_string(state->c.shape()) + " vs gates " + shape_string(i.shape()));
  }
  const auto c = state ? ad::add(ad::mul(f, state->c), ad::mul(i, g)) : ad::mul(i, g);
  return {ad::mul(o, ad::tanh(c)), c};
}

template <class Real>
ForwardResult<Real> ConvLstmNet<Real>::run(ad::Tape<Real>&, std::span<const ad::Var<Real>> clips, Mode mode,
                                           const std::map<std::string, ad::Var<Real>>& p) const {
  const auto& cfg = this->config_;
  const std::size_t T = cfg.frames, F = cfg.lstm_filters, k = cfg.lstm_kernel, pad = k / 2, s = cfg.lstm_stride;
  const Real eps = static_cast<Real>(cfg.bn_eps);
  ForwardResult<Real> result;
  std::vector<ad::Var<Real>> inputs(clips.begin(), clips.end());
  for (std::size_t l = 0; l < cfg.lstm_layers; ++l) {
    const std::string lstm = layer_name("lstm", l), bn = layer_name("bn", l);
    std::vector<ad::Var<Real>> sequences;
    const bool last_layer = l + 1 == cfg.lstm_layers;
    for (const auto& x : inputs) {
      const auto gates = ad::add_channel_bias(ad::conv3d(x, p.at(lstm + ".wx"), {1, s, s}, {0, pad, pad}),
                                              p.at(lstm + ".bias"));
      std::vector<ad::Var<Real>> hs;
      std::optional<ConvLstmState<Real>> state;
      for (std::size_t t = 0; t < T; ++t) {
        state = step(ad::slice_front(gates, t, 1), state ? &*state : nullptr, p.at(lstm + ".wh"), F, k);
        hs.push_back(state->h);
      }
      sequences.push_back(ad::concat_front(std::span<const ad::Var<Real>>(hs)));
      if (last_layer) result.activation_steps.push_back(std::move(hs));
    }
    if (last_layer) result.activations = sequences;

    std::vector<ad::Var<Real>> normalized;
    if (mode == Mode::Train) {
      const auto all = ad::concat_front(std::span<const ad::Var<Real>>(sequences));
      auto out = ad::batch_norm_train(all, p.at(bn + ".gamma"), p.at(bn + ".beta"), eps);
      result.batch_stats.push_back({bn, out.mean, out.variance, all.value().size() / F});
      for (std::size_t b = 0; b < sequences.size(); ++b) normalized.push_back(ad::slice_front(out.y, b * T, T));
    } else {
      for (const auto& seq : sequences) {
        normalized.push_back(ad::batch_norm_eval(seq, p.at(bn + ".gamma"), p.at(bn + ".beta"),
                                                 this->buffers_.at(bn + ".running_mean"),
                                                 this->buffers_.at(bn + ".running_var"), eps));
      }
    }
    inputs.clear();
    for (const auto& y : normalized) inputs.push_back(ad::maxpool(y, {1, cfg.lstm_pool, cfg.lstm_pool}));
  }
  for (const auto& x : inputs) {
    const auto last = ad::slice_front(x, T - 1, 1);
    const auto flat = ad::reshape(last, Shape{last.value().size()});
    result.logits.push_back(ad::linear(flat, p.at("fc.weight"), p.at("fc.bias")));
  }
  return result;
}

template <class Real>
std::unique_ptr<VideoModel<Real>> make_model(const ModelConfig& config, ParamMap<Real> params,
                                             ParamMap<Real> buffers) {
  if (config.kind == ModelKind::Conv3D) {
    return std::make_unique<Conv3DNet<Real>>(config, std::move(params), std::move(buffers));
  }
  return std::make_unique<ConvLstmNet<Real>>(config, std::move(params), std::move(buffers));
}

template <class Real>
std::unique_ptr<VideoModel<Real>> init_model(const ModelConfig& config, std::uint64_t seed) {
  ParamMap<Real> params, buffers;
  std::uint64_t index = 0;
  for (const auto& [name, shape] : parameter_shapes(config)) {
    const std::uint64_t s = data::derive_seed(seed, index++, 0x1417);
    auto ends_with = [&](std::string_view suffix) {
      return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with(".bias") || ends_with(".beta")) {
      Tensor<Real> t(shape);
      if (config.kind == ModelKind::ConvLstm && name.starts_with("lstm")) {
        const std::size_t F = config.lstm_filters;
        for (std::size_t i = F; i < 2 * F; ++i) t[i] = static_cast<Real>(config.forget_bias);
      }
      params.emplace(name, std::move(t));
    } else if (ends_with(".gamma")) {
      params.emplace(name, Tensor<Real>::filled(shape, Real(1)));
    } else if (name == "fc.weight") {
      params.emplace(name, uniform_tensor<Real>(shape, std::sqrt(6.0 / double(shape[0] + shape[1])), s));
    } else if (ends_with(".wx") || ends_with(".wh")) {
      // Both gate convolutions feed the same sum, so they share one fan-in.
      const std::string layer = name.substr(0, name.find('.'));
      const std::size_t fan_in = shape_size(parameter_shapes(config).at(layer + ".wx")) / shape.back() +
                                 shape_size(parameter_shapes(config).at(layer + ".wh")) / shape.back();
      params.emplace(name, uniform_tensor<Real>(shape, std::sqrt(3.0 / double(fan_in)), s));
    } else {
      const std::size_t fan_in = shape_size(shape) / shape.back();
      params.emplace(name, uniform_tensor<Real>(shape, std::sqrt(6.0 / double(fan_in)), s));
    }
  }
  for (const auto& [name, shape] : buffer_shapes(config)) {
    const bool var = name.ends_with(".running_var");
    buffers.emplace(name, Tensor<Real>::filled(shape, var ? Real(1) : Real(0)));
  }
  return make_model<Real>(config, std::move(params), std::move(buffers));
}

template class VideoModel<float>;
template class VideoModel<double>;
template class Conv3DNet<float>;
template class Conv3DNet<double>;
template class ConvLstmNet<float>;
template class ConvLstmNet<double>;
template std::unique_ptr<VideoModel<float>> init_model(const ModelConfig&, std::uint64_t);
template std::unique_ptr<VideoModel<double>> init_model(const ModelConfig&, std::uint64_t);
template std::unique_ptr<VideoModel<float>> make_model(const ModelConfig&, ParamMap<float>, ParamMap<float>);
template std::unique_ptr<VideoModel<double>> make_model(const ModelConfig&, ParamMap<double>, ParamMap<double>);

}  // namespace vidsal::models
