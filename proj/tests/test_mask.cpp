#include <cmath>
#include <random>

#include "doctest.h"
#include "fd_oracle.hpp"
#include "vidsal/mask.hpp"

using namespace vidsal;
using namespace vidsal::models;
using vidsal::testing::check_gradients;
using vidsal::testing::random_tensor;

namespace {

ModelConfig tiny(ModelKind kind, std::size_t frames) {
  ModelConfig c;
  c.kind = kind;
  c.frames = frames;
  c.height = c.width = 8;
  c.num_classes = 3;
  c.conv_layers = {{{3, 3, 3}, {1, 2, 2}, {1, 1, 1}, 4}, {{3, 3, 3}, {2, 1, 1}, {1, 1, 1}, 5}};
  c.lstm_filters = 3;
  c.lstm_kernel = 3;
  c.lstm_stride = 1;
  return c;
}

// Zero weights everywhere: logits equal fc.bias whatever the input.
template <class Real>
std::unique_ptr<VideoModel<Real>> constant_model(const ModelConfig& cfg) {
  auto m = init_model<Real>(cfg, 1);
  std::mt19937_64 rng(2);
  for (auto& [name, t] : m->params())
    for (auto& v : t.data()) v = name == "fc.bias" ? Real(std::uniform_real_distribution<double>(-1, 1)(rng)) : Real(0);
  return m;
}

mask::LossTerms<double> terms_for(const std::vector<double>& m, const VideoModel<double>& model, ad::Tape<double>& tape,
                                  const mask::MaskConfig& cfg = {}) {
  const auto clip = tape.constant(Tensor<double>(model.config().input_shape()));
  return mask::mask_loss(tape.constant(Tensor<double>(Shape{m.size()}, m)), clip, model, 0, cfg);
}

double sigmoid(double z) { return 1 / (1 + std::exp(-z)); }

}  // namespace

TEST_CASE("regularizer terms: hand examples") {
  auto model5 = init_model<double>(tiny(ModelKind::Conv3D, 5), 1);
  ad::Tape<double> tape;
  const auto t = terms_for({0, 0, 1, 1, 0}, *model5, tape);
  CHECK(t.tv.value().item() == 2.0);
  CHECK(t.l1.value().item() == 2.0);
  const auto c = terms_for({0.3, 0.3, 0.3, 0.3, 0.3}, *model5, tape);
  CHECK(c.tv.value().item() == 0.0);

  auto model2 = init_model<double>(tiny(ModelKind::Conv3D, 2), 1);
  const auto h = terms_for({0.5, 0.5}, *model2, tape);
  CHECK(h.l1.value().item() == 1.0);

  mask::MaskConfig cfg;
  const auto w = terms_for({0.2, 0.6, 0.1, 0.9, 0.4}, *model5, tape, cfg);
  const double tv = std::pow(0.4, 3) + std::pow(0.5, 3) + std::pow(0.8, 3) + std::pow(0.5, 3);
  CHECK(w.tv.value().item() == doctest::Approx(tv).epsilon(1e-12));
  CHECK(w.total.value().item() ==
        doctest::Approx(0.01 * 2.2 + 0.02 * tv + w.score.value().item()).epsilon(1e-12));
  CHECK(w.score.value().item() > 0.0);
  CHECK(w.score.value().item() < 1.0);
}

TEST_CASE("mask_loss rejects bad inputs") {
  auto model = init_model<double>(tiny(ModelKind::Conv3D, 4), 1);
  ad::Tape<double> tape;
  const auto clip = tape.constant(Tensor<double>(model->config().input_shape()));
  CHECK_THROWS_AS(mask::mask_loss(tape.constant(Tensor<double>(Shape{4})), clip, *model, 3, mask::MaskConfig{}),
                  ValueError);
  CHECK_THROWS_AS(mask::mask_loss(tape.constant(Tensor<double>(Shape{3})), clip, *model, 0, mask::MaskConfig{}),
                  ShapeError);
}

TEST_CASE("mask_loss gradient with respect to the pre-sigmoid vector matches finite differences") {
  for (auto kind : {ModelKind::Conv3D, ModelKind::ConvLstm}) {
    const auto cfg = tiny(kind, 5);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto model = init_model<double>(cfg, seed);
      std::mt19937_64 rng(seed + 50);
      const auto clip = random_tensor(cfg.input_shape(), rng, 0, 1);
      const auto z = random_tensor({5}, rng, -2, 2);
      mask::MaskConfig mc;
      mc.lambda1 = 0.3;  // comparable to the score so every term is exercised
      mc.lambda2 = 0.5;
      const auto report = check_gradients(
          {z},
          [&](ad::Tape<double>& tape, const std::vector<ad::Var<double>>& in) {
            return mask::mask_loss(ad::sigmoid(in[0]), tape.constant(clip), *model, seed % 3, mc).total;
          },
          1e-5, 64, seed);
      CHECK_MESSAGE(report.worst_relative_error < 1e-3, kind_name(kind) << " seed " << seed);
    }
  }
}

TEST_CASE("constant model without regularizers: zero gradient, the mask does not move") {
  for (auto kind : {ModelKind::Conv3D, ModelKind::ConvLstm}) {
    const auto cfg = tiny(kind, 6);
    auto model = constant_model<double>(cfg);
    std::mt19937_64 rng(7);
    mask::MaskConfig mc;
    mc.lambda1 = mc.lambda2 = 0;
    ad::Tape<double> tape;
    const auto z = tape.leaf(random_tensor({6}, rng), true);
    const auto loss = mask::mask_loss(ad::sigmoid(z), tape.constant(random_tensor(cfg.input_shape(), rng, 0, 1)),
                                      *model, 1, mc);
    const auto grads = ad::backward(tape, loss.total);
    const auto* g = grads.find(z);
    if (g)
      for (double v : g->data()) CHECK(v == 0.0);

    auto fmodel = constant_model<float>(cfg);
    mc.iterations = 20;
    const auto r = mask::optimize_mask(*fmodel, random_tensor(cfg.input_shape(), rng, 0, 1).cast<float>(), 1, mc);
    CHECK(r.pre_sigmoid == mask::initial_mask(6, mc));
  }
}

TEST_CASE("initial mask is centred and straddles the threshold") {
  const mask::MaskConfig mc;
  const auto z = mask::initial_mask(16, mc);
  for (std::size_t t = 0; t < 16; ++t) {
    const bool centre = t >= 5 && t < 11;
    CHECK(z[t] == (centre ? mc.init_active : mc.init_inactive));
    CHECK((sigmoid(z[t]) > mc.threshold) == centre);
  }
  // both sides can cross within the default budget
  const double budget = mc.learning_rate * double(mc.iterations);
  const double logit = std::log(mc.threshold / (1 - mc.threshold));
  CHECK(mc.init_active - budget < logit);
  CHECK(mc.init_inactive + budget > logit);
}

TEST_CASE("optimize_mask: config contract, trace length, score ranges, determinism") {
  const auto cfg = tiny(ModelKind::Conv3D, 8);
  auto model = init_model<float>(cfg, 3);
  std::mt19937_64 rng(8);
  const auto clip = random_tensor(cfg.input_shape(), rng, 0, 1).cast<float>();
  mask::MaskConfig mc;
  mc.iterations = 0;
  CHECK_THROWS_AS(mask::optimize_mask(*model, clip, 0, mc), ValueError);
  mc = {};
  mc.beta = 0.5;
  CHECK_THROWS_AS(mask::optimize_mask(*model, clip, 0, mc), ValueError);
  mc = {};
  mc.lambda1 = -1;
  CHECK_THROWS_AS(mask::optimize_mask(*model, clip, 0, mc), ValueError);
  mc = {};
  CHECK_THROWS_AS(mask::optimize_mask(*model, TensorF(Shape{1, 8, 8, 1}), 0, mc), ShapeError);

  mc.iterations = 1;
  const auto one = mask::optimize_mask(*model, clip, 2, mc);
  CHECK(one.loss_trace.size() == 1);
  const auto init = mask::initial_mask(8, mc);
  for (std::size_t t = 0; t < 8; ++t) CHECK(std::abs(one.pre_sigmoid[t] - init[t]) <= mc.learning_rate * 1.0001);

  mc.iterations = 25;
  const auto a = mask::optimize_mask(*model, clip, 2, mc);
  const auto b = mask::optimize_mask(*model, clip, 2, mc);
  CHECK(a.loss_trace.size() == 25);
  CHECK(a.target_class == 2);
  CHECK(a.pre_sigmoid == b.pre_sigmoid);
  CHECK(a.loss_trace == b.loss_trace);
  CHECK(a.freeze_score == b.freeze_score);
  CHECK(a.reverse_score == b.reverse_score);
  for (double s : {a.original_score, a.freeze_score, a.reverse_score}) {
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
  CHECK(a.original_score == doctest::Approx(double(model->predict(clip)[2])));
  for (std::size_t t = 0; t < 8; ++t) {
    CHECK(a.activation[t] == doctest::Approx(sigmoid(a.pre_sigmoid[t])).epsilon(1e-12));
    CHECK(a.active[t] == (a.activation[t] > 0.1));
  }
}

TEST_CASE("a dominant L1 penalty switches every frame off") {
  const auto cfg = tiny(ModelKind::Conv3D, 8);
  auto model = init_model<float>(cfg, 4);
  std::mt19937_64 rng(9);
  mask::MaskConfig mc;
  mc.lambda1 = 1e3;
  mc.lambda2 = 0;
  const auto r = mask::optimize_mask(*model, random_tensor(cfg.input_shape(), rng, 0, 1).cast<float>(), 0, mc);
  for (double a : r.activation) CHECK(a < 0.1);
  for (bool on : r.active) CHECK_FALSE(on);
  CHECK(r.final_loss < r.loss_trace.front());
}

TEST_CASE("non-finite model output aborts with the iteration index") {
  const auto cfg = tiny(ModelKind::Conv3D, 4);
  auto model = init_model<float>(cfg, 5);
  model->params().at("fc.weight")[0] = 1e38f;
  model->params().at("fc.weight")[3] = 1e38f;
  std::mt19937_64 rng(10);
  auto clip = random_tensor(cfg.input_shape(), rng, 0, 1).cast<float>();
  for (auto& v : clip.data()) v += 1e6f;
  try {
    mask::optimize_mask(*model, clip, 0, mask::MaskConfig{});
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("iteration 0") != std::string::npos);
  }
}
