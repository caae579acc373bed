#include <chrono>
#include <random>

#include "doctest.h"
#include "fd_oracle.hpp"
#include "vidsal/crop.hpp"
#include "vidsal/mask.hpp"

using namespace vidsal;
using namespace vidsal::crop;
using vidsal::testing::random_tensor;

namespace {

models::ModelConfig small(models::ModelKind kind, std::size_t frames) {
  models::ModelConfig c;
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

std::vector<bool> frames_on(std::size_t T, std::size_t first, std::size_t last) {
  std::vector<bool> m(T, false);
  for (std::size_t t = first; t <= last; ++t) m[t] = true;
  return m;
}

}  // namespace

TEST_CASE("crop_clip freezes the complement to the boundary frames") {
  std::mt19937_64 rng(1);
  const auto clip = random_tensor({6, 2, 2, 1}, rng, 0, 1).cast<float>();
  CHECK(crop_clip(clip, 0, 5) == clip);
  const auto c = crop_clip(clip, 2, 3);
  const std::vector<std::size_t> source{2, 2, 2, 3, 3, 3};
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t i = 0; i < 4; ++i) CHECK(c[t * 4 + i] == clip[source[t] * 4 + i]);
  CHECK_THROWS_AS(crop_clip(clip, 3, 2), ValueError);
  CHECK_THROWS_AS(crop_clip(clip, 0, 6), ValueError);
}

TEST_CASE("exhaustive_crop_search: table size, order, full range equals the original score") {
  for (auto kind : {models::ModelKind::Conv3D, models::ModelKind::ConvLstm}) {
    for (std::size_t T : {1u, 4u, 16u}) {
      auto cfg = small(kind, T);
      if (kind == models::ModelKind::Conv3D && T < 4) cfg.conv_layers = {{{1, 3, 3}, {1, 2, 2}, {1, 1, 1}, 4}};
      const auto model = models::init_model<float>(cfg, 3);
      std::mt19937_64 rng(T);
      const auto clip = random_tensor(cfg.input_shape(), rng, 0, 1).cast<float>();
      const auto r = exhaustive_crop_search(*model, clip, 1);
      REQUIRE(r.table.size() == T * (T + 1) / 2);
      std::size_t i = 0;
      for (std::size_t s = 0; s < T; ++s)
        for (std::size_t e = s; e < T; ++e, ++i) {
          CHECK(r.table[i].start == s);
          CHECK(r.table[i].end == e);
        }
      const auto& full = r.table[T - 1];
      CHECK(full.start == 0);
      CHECK(full.end == T - 1);
      CHECK(full.score == mask::class_score(*model, clip, 1));
      double best = 0;
      for (const auto& c : r.table) best = std::max(best, c.score);
      CHECK(r.best.score == best);
      for (const auto& c : r.table) {
        if (c.score != best) continue;
        const std::size_t len = c.end - c.start;
        const std::size_t best_len = r.best.end - r.best.start;
        CHECK((len > best_len || (len == best_len && c.start >= r.best.start)));
      }
    }
  }
}

TEST_CASE("exhaustive_crop_search: constant model ties resolve to the first single frame") {
  const auto cfg = small(models::ModelKind::Conv3D, 16);
  auto model = models::init_model<float>(cfg, 5);
  for (auto& v : model->params().at("fc.weight").data()) v = 0;
  for (auto& v : model->params().at("fc.bias").data()) v = 0;
  std::mt19937_64 rng(6);
  const auto clip = random_tensor(cfg.input_shape(), rng, 0, 1).cast<float>();
  const auto r = exhaustive_crop_search(*model, clip, 2);
  CHECK(r.table.size() == 136);
  for (const auto& c : r.table) CHECK(c.score == r.table.front().score);
  CHECK(r.best.start == 0);
  CHECK(r.best.end == 0);
  CHECK(r.target_class == 2);
  CHECK_THROWS_AS(exhaustive_crop_search(*model, clip, 3), ValueError);
}

TEST_CASE("exhaustive_crop_search: thread count does not change the result") {
  const auto cfg = small(models::ModelKind::ConvLstm, 7);
  const auto model = models::init_model<float>(cfg, 8);
  std::mt19937_64 rng(9);
  const auto clip = random_tensor(cfg.input_shape(), rng, 0, 1).cast<float>();
  const auto one = exhaustive_crop_search(*model, clip, 0, 1);
  const auto three = exhaustive_crop_search(*model, clip, 0, 3);
  REQUIRE(one.table.size() == three.table.size());
  for (std::size_t i = 0; i < one.table.size(); ++i) CHECK(one.table[i].score == three.table[i].score);
  CHECK(one.best.start == three.best.start);
  CHECK(one.best.end == three.best.end);
}

TEST_CASE("exhaustive_crop_search: work grows quadratically with the clip length") {
  std::vector<double> seconds;
  for (std::size_t T : {8u, 16u, 32u}) {
    const auto cfg = small(models::ModelKind::Conv3D, T);
    const auto model = models::init_model<float>(cfg, 1);
    std::mt19937_64 rng(T);
    const auto clip = random_tensor(cfg.input_shape(), rng, 0, 1).cast<float>();
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = exhaustive_crop_search(*model, clip, 0);
    seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    CHECK(r.table.size() == T * (T + 1) / 2);
  }
  // 36, 136 and 528 crops, each forward pass itself linear in T
  CHECK(seconds[1] > 2 * seconds[0]);
  CHECK(seconds[2] > 2 * seconds[1]);
}

TEST_CASE("mask_crop_agreement and window_recall") {
  CHECK(mask_crop_agreement(frames_on(16, 3, 7), {3, 7}) == 1.0);
  CHECK(mask_crop_agreement(frames_on(16, 0, 2), {5, 9}) == 0.0);
  CHECK(mask_crop_agreement(frames_on(16, 3, 7), {5, 9}) == doctest::Approx(3.0 / 7).epsilon(1e-15));
  CHECK(mask_crop_agreement(std::vector<bool>(16, false), {4, 4}) == 0.0);
  CHECK_THROWS_AS(mask_crop_agreement(frames_on(8, 0, 1), {5, 9}), ValueError);

  CHECK(window_recall(frames_on(16, 3, 7), {5, 9}) == 0.6);
  CHECK(window_recall(frames_on(16, 3, 7), {4, 6}) == 1.0);
  CHECK(window_recall(std::vector<bool>(16, false), {4, 6}) == 0.0);
  CHECK_THROWS_AS(window_recall(frames_on(4, 0, 1), {2, 4}), ValueError);
}
