#include "vidsal/mask.hpp"

#include <cmath>
#include <string>

#include "vidsal/optim.hpp"

namespace vidsal::mask {

void MaskConfig::validate() const {
  if (!(lambda1 >= 0) || !(lambda2 >= 0)) throw ValueError("mask: lambda1 and lambda2 must be >= 0");
  if (!(beta >= 1)) throw ValueError("mask: beta must be >= 1");
  if (!(learning_rate > 0)) throw ValueError("mask: learning rate must be > 0");
  if (iterations < 1) throw ValueError("mask: iterations must be >= 1");
  if (!(threshold > 0 && threshold < 1)) throw ValueError("mask: threshold must lie in (0, 1)");
  if (!std::isfinite(init_active) || !std::isfinite(init_inactive)) throw ValueError("mask: non-finite init");
}

std::vector<double> initial_mask(std::size_t frames, const MaskConfig& config) {
  std::vector<double> z(frames, config.init_inactive);
  const std::size_t third = frames / 3;
  for (std::size_t t = third; t < frames - third; ++t) z[t] = config.init_active;
  return z;
}

template <class Real>
LossTerms<Real> mask_loss(ad::Var<Real> m, ad::Var<Real> clip, const models::VideoModel<Real>& model,
                          std::size_t target, const MaskConfig& config) {
  if (m.value().rank() != 1 || m.value().size() < 2) {
    throw ShapeError("mask_loss: need a mask of length >= 2, got " + shape_string(m.shape()));
  }
  if (target >= model.num_classes()) {
    throw ValueError("mask_loss: class " + std::to_string(target) + " out of range");
  }
  LossTerms<Real> terms;
  terms.l1 = ad::sum(ad::abs(m));
  terms.tv = ad::sum(ad::abs_pow(ad::diff(m), static_cast<Real>(config.beta)));
  const auto perturbed = ad::freeze(clip, m);
  const auto out = model.forward(*m.tape, std::span<const ad::Var<Real>>(&perturbed, 1), models::Mode::Eval);
  terms.score = ad::select(ad::softmax(out.logits[0]), target);
  terms.total = ad::add(ad::add(ad::scale(terms.l1, static_cast<Real>(config.lambda1)),
                                ad::scale(terms.tv, static_cast<Real>(config.lambda2))),
                        terms.score);
  return terms;
}

double class_score(const models::VideoModel<float>& model, const TensorF& clip, std::size_t target) {
  return double(model.predict(clip).at(target));
}

MaskResult optimize_mask(const models::VideoModel<float>& model, const TensorF& clip, std::size_t target,
                         const MaskConfig& config) {
  config.validate();
  if (clip.rank() != 4 || clip.extent(0) < 2) {
    throw ShapeError("optimize_mask: need a clip [T>=2, H, W, C], got " + shape_string(clip.shape()));
  }
  const std::size_t T = clip.extent(0);
  MaskResult r;
  r.target_class = target;
  r.pre_sigmoid = initial_mask(T, config);

  optim::Adam adam({config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps});
  auto evaluate = [&](bool with_grad, std::size_t iteration) {
    ad::Tape<float> tape;
    TensorF zt(Shape{T});
    for (std::size_t t = 0; t < T; ++t) zt[t] = static_cast<float>(r.pre_sigmoid[t]);
    const auto z = tape.leaf(zt, with_grad);
    const auto x = tape.constant(clip);
    auto diverged = [&] {
      return DivergenceError("optimize_mask: non-finite loss at iteration " + std::to_string(iteration));
    };
    try {
      const auto terms = mask_loss(ad::sigmoid(z), x, model, target, config);
      const double loss = terms.total.value().item();
      if (!std::isfinite(loss)) throw diverged();
      TensorF grad;
      if (with_grad) grad = ad::backward(tape, terms.total).at(z);
      return std::pair{loss, grad};
    } catch (const NonFiniteError&) {
      throw diverged();
    }
  };

  for (std::size_t it = 0; it < config.iterations; ++it) {
    auto [loss, grad] = evaluate(true, it);
    r.loss_trace.push_back(loss);
    std::vector<double> g(grad.data().begin(), grad.data().end());
    adam.step<double>("mask", r.pre_sigmoid, g);
  }
  r.final_loss = evaluate(false, config.iterations).first;

  std::vector<float> m(T);
  for (std::size_t t = 0; t < T; ++t) {
    const double z = r.pre_sigmoid[t];
    const double a = z >= 0 ? 1 / (1 + std::exp(-z)) : std::exp(z) / (1 + std::exp(z));
    r.activation.push_back(a);
    m[t] = static_cast<float>(a);
  }
  r.active = threshold_mask<double>(r.activation, config.threshold);
  r.original_score = class_score(model, clip, target);
  r.freeze_score = class_score(model, apply_freeze<float>(clip, m), target);
  r.reverse_score = class_score(model, apply_reverse(clip, r.active), target);
  return r;
}

template LossTerms<float> mask_loss(ad::Var<float>, ad::Var<float>, const models::VideoModel<float>&, std::size_t,
                                    const MaskConfig&);
template LossTerms<double> mask_loss(ad::Var<double>, ad::Var<double>, const models::VideoModel<double>&,
                                     std::size_t, const MaskConfig&);

}  // namespace vidsal::mask
