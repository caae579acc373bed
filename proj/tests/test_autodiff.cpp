#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "doctest.h"
#include "fd_oracle.hpp"
#include "vidsal/ops.hpp"

using namespace vidsal;
using namespace vidsal::ad;
using vidsal::testing::check_gradients;
using vidsal::testing::random_tensor;
using vidsal::testing::random_tensor_away_from_zero;
using vidsal::testing::weighted_sum;

namespace {

constexpr int kSeeds = 20;
constexpr double kTol = 1e-3;

// Naive conv reference used as a direct-loop oracle.
Tensor<double> naive_conv3d(const Tensor<double>& x, const Tensor<double>& k, Int3 s, Int3 p) {
  const std::size_t T = x.extent(0), H = x.extent(1), W = x.extent(2), C = x.extent(3);
  const std::size_t kt = k.extent(0), kh = k.extent(1), kw = k.extent(2), Co = k.extent(4);
  const std::size_t To = (T + 2 * p[0] - kt) / s[0] + 1, Ho = (H + 2 * p[1] - kh) / s[1] + 1,
                    Wo = (W + 2 * p[2] - kw) / s[2] + 1;
  Tensor<double> out(Shape{To, Ho, Wo, Co});
  for (std::size_t t = 0; t < To; ++t)
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t xo = 0; xo < Wo; ++xo)
        for (std::size_t co = 0; co < Co; ++co) {
          double acc = 0;
          for (std::size_t a = 0; a < kt; ++a)
            for (std::size_t b = 0; b < kh; ++b)
              for (std::size_t c = 0; c < kw; ++c)
                for (std::size_t ci = 0; ci < C; ++ci) {
                  const long ti = long(t * s[0] + a) - long(p[0]);
                  const long yi = long(y * s[1] + b) - long(p[1]);
                  const long xi = long(xo * s[2] + c) - long(p[2]);
                  if (ti < 0 || yi < 0 || xi < 0 || ti >= long(T) || yi >= long(H) || xi >= long(W)) continue;
                  acc += x.at({std::size_t(ti), std::size_t(yi), std::size_t(xi), ci}) * k.at({a, b, c, ci, co});
                }
          out.at({t, y, xo, co}) = acc;
        }
  return out;
}

void check_unary_op(const char* name, Var<double> (*op)(Var<double>), bool kink_at_zero) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed);
    auto x = kink_at_zero ? random_tensor_away_from_zero({3, 5}, rng) : random_tensor({3, 5}, rng, -3, 3);
    auto rep = check_gradients({x}, [&](Tape<double>& t, const auto& v) { return weighted_sum(t, op(v[0]), seed); });
    CAPTURE(name);
    CAPTURE(seed);
    CHECK(rep.worst_relative_error < kTol);
  }
}

}  // namespace

TEST_CASE("backward of a linear function") {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>::scalar(3.0), true);
  auto y = scale(x, 2.0);
  auto g = backward(tape, y);
  CHECK(g.at(x).item() == 2.0);
}

TEST_CASE("disconnected tensors receive no gradient entry") {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>::scalar(1.0), true);
  auto unused = tape.leaf(Tensor<double>::scalar(5.0), true);
  auto constant = tape.constant(Tensor<double>::scalar(2.0));
  auto y = mul(x, constant);
  auto g = backward(tape, y);
  CHECK(g.contains(x));
  CHECK_FALSE(g.contains(unused));
  CHECK_FALSE(g.contains(constant));
}

TEST_CASE("backward rejects non-scalar outputs") {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>(Shape{3}), true);
  CHECK_THROWS_AS(backward(tape, sigmoid(x)), ShapeError);
}

TEST_CASE("sum of sigmoid matches finite differences") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed);
    auto x = random_tensor({8}, rng, -2, 2);
    auto rep = check_gradients({x}, [](Tape<double>&, const auto& v) { return sum(sigmoid(v[0])); }, 1e-3);
    CHECK(rep.worst_relative_error < 1e-4);
  }
}

TEST_CASE("two backward passes on one tape are bit-identical") {
  std::mt19937_64 rng(5);
  Tape<float> tape;
  auto x = tape.leaf(random_tensor({2, 6, 6, 2}, rng).cast<float>(), true);
  auto k = tape.leaf(random_tensor({2, 3, 3, 2, 4}, rng).cast<float>(), true);
  auto y = sum(tanh(conv3d(x, k, {1, 2, 2}, {1, 1, 1})));
  auto g1 = backward(tape, y);
  auto g2 = backward(tape, y);
  CHECK(g1.size() == g2.size());
  CHECK(g1.at(x) == g2.at(x));
  CHECK(g1.at(k) == g2.at(k));
}

TEST_CASE("sigmoid(0) is 0.5 with gradient 0.25") {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>::scalar(0.0), true);
  auto y = sigmoid(x);
  CHECK(y.value().item() == 0.5);
  CHECK(backward(tape, y).at(x).item() == 0.25);
}

TEST_CASE("softmax of zero logits is uniform") {
  Tape<double> tape;
  auto z = tape.constant(Tensor<double>(Shape{4}));
  auto p = softmax(z);
  for (double v : p.value().data()) CHECK(v == 0.25);
}

TEST_CASE("maxpool 2x2 routes the gradient to the maximum") {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>(Shape{1, 2, 2, 1}, {1, 2, 3, 4}), true);
  auto y = maxpool(x, {1, 2, 2});
  CHECK(y.value().item() == 4.0);
  auto g = backward(tape, sum(y));
  CHECK(g.at(x).vector() == std::vector<double>{0, 0, 0, 1});
}

TEST_CASE("maxpool ties go to the first element in row-major order") {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>(Shape{1, 2, 2, 1}, {7, 7, 7, 7}), true);
  auto g = backward(tape, sum(maxpool(x, {1, 2, 2})));
  CHECK(g.at(x).vector() == std::vector<double>{1, 0, 0, 0});
}

TEST_CASE("non-finite inputs are rejected") {
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>(Shape{2}, {1.0, std::nan("")}));
  CHECK_THROWS_AS(sigmoid(x), ValueError);
  CHECK_THROWS_AS(sum(x), ValueError);
  auto y = tape.constant(Tensor<double>(Shape{2}, {1.0, INFINITY}));
  CHECK_THROWS_AS(softmax(y), ValueError);
}

TEST_CASE("maxpool window larger than the input is rejected") {
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>(Shape{1, 2, 2, 1}));
  CHECK_THROWS_AS(maxpool(x, {1, 3, 3}), ShapeError);
}

TEST_CASE("conv3d identity kernel reproduces the input") {
  std::mt19937_64 rng(3);
  Tape<double> tape;
  auto xt = random_tensor({3, 5, 4, 1}, rng);
  auto x = tape.constant(xt);
  auto k = tape.constant(Tensor<double>::filled({1, 1, 1, 1, 1}, 1.0));
  CHECK(conv3d(x, k, {1, 1, 1}, {0, 0, 0}).value() == xt);
}

TEST_CASE("conv3d zero kernel: zero output, kernel gradient is the input/upstream correlation") {
  std::mt19937_64 rng(4);
  Tape<double> tape;
  auto xt = random_tensor({3, 4, 4, 2}, rng);
  auto x = tape.constant(xt);
  auto k = tape.leaf(Tensor<double>(Shape{2, 3, 3, 2, 3}), true);
  auto y = conv3d(x, k, {1, 1, 1}, {0, 0, 0});
  for (double v : y.value().data()) CHECK(v == 0.0);
  auto upstream = random_tensor(y.shape(), rng);
  auto w = tape.constant(upstream);
  auto g = backward(tape, sum(mul(y, w)));
  const auto& gk = g.at(k);
  // dL/dK[a,b,c,ci,co] = sum_o x[o + (a,b,c), ci] * upstream[o, co]
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t ci = 0; ci < 2; ++ci)
          for (std::size_t co = 0; co < 3; ++co) {
            double expect = 0;
            for (std::size_t t = 0; t < 2; ++t)
              for (std::size_t yy = 0; yy < 2; ++yy)
                for (std::size_t xx = 0; xx < 2; ++xx)
                  expect += xt.at({t + a, yy + b, xx + c, ci}) * upstream.at({t, yy, xx, co});
            CHECK(gk.at({a, b, c, ci, co}) == doctest::Approx(expect).epsilon(1e-12));
          }
}

TEST_CASE("conv3d on a delta impulse with full padding yields the flipped kernel") {
  std::mt19937_64 rng(8);
  const std::size_t kt = 2, kh = 3, kw = 3;
  Tensor<double> impulse(Shape{3, 5, 5, 1});
  impulse.at({1, 2, 2, 0}) = 1.0;
  auto kt_ = random_tensor({kt, kh, kw, 1, 1}, rng);
  Tape<double> tape;
  auto y = conv3d(tape.constant(impulse), tape.constant(kt_), {1, 1, 1}, {kt - 1, kh - 1, kw - 1});
  CHECK(y.value() == naive_conv3d(impulse, kt_, {1, 1, 1}, {kt - 1, kh - 1, kw - 1}));
  // Output position o sees kernel tap (q + p - o): the kernel appears flipped.
  for (std::size_t a = 0; a < kt; ++a)
    for (std::size_t b = 0; b < kh; ++b)
      for (std::size_t c = 0; c < kw; ++c) {
        const std::size_t ot = 1 + (kt - 1) - a, oy = 2 + (kh - 1) - b, ox = 2 + (kw - 1) - c;
        CHECK(y.value().at({ot, oy, ox, 0}) == kt_.at({a, b, c, 0, 0}));
      }
}

TEST_CASE("conv3d matches the naive loop with stride and padding") {
  for (int seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    auto x = random_tensor({5, 7, 6, 3}, rng);
    auto k = random_tensor({3, 3, 2, 3, 5}, rng);
    Tape<double> tape;
    auto y = conv3d(tape.constant(x), tape.constant(k), {2, 2, 1}, {1, 0, 1});
    auto ref = naive_conv3d(x, k, {2, 2, 1}, {1, 0, 1});
    REQUIRE(y.shape() == ref.shape());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y.value()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv3d reports shape mismatches") {
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>(Shape{4, 6, 6, 2}));
  auto k = tape.constant(Tensor<double>(Shape{2, 3, 3, 1, 2}));
  try {
    conv3d(x, k, {1, 1, 1}, {0, 0, 0});
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("[4,6,6,2]") != std::string::npos);
  }
  auto big = tape.constant(Tensor<double>(Shape{9, 3, 3, 2, 1}));
  CHECK_THROWS_AS(conv3d(x, big, {1, 1, 1}, {0, 0, 0}), ShapeError);
  CHECK_THROWS_AS(conv3d(x, tape.constant(Tensor<double>(Shape{1, 1, 1, 2, 1})), {0, 1, 1}, {0, 0, 0}), ShapeError);
}

TEST_CASE("conv3d gradients match finite differences") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed);
    auto x = random_tensor({4, 6, 6, 1}, rng);
    auto k = random_tensor({2, 3, 3, 1, 2}, rng);
    auto rep = check_gradients(
        {x, k}, [&](Tape<double>& t, const auto& v) { return weighted_sum(t, conv3d(v[0], v[1], {1, 1, 1}, {0, 0, 0}), seed); },
        1e-3, 200, seed);
    CAPTURE(seed);
    CHECK(rep.worst_relative_error < kTol);
    auto rep2 = check_gradients(
        {random_tensor({3, 5, 5, 2}, rng), random_tensor({2, 3, 3, 2, 3}, rng)},
        [&](Tape<double>& t, const auto& v) { return weighted_sum(t, conv3d(v[0], v[1], {2, 2, 1}, {1, 1, 1}), seed); },
        1e-3, 200, seed);
    CHECK(rep2.worst_relative_error < kTol);
  }
}

TEST_CASE("elementwise ops match finite differences") {
  check_unary_op("sigmoid", &sigmoid<double>, false);
  check_unary_op("tanh", &ad::tanh<double>, false);
  check_unary_op("relu", &relu<double>, true);
  check_unary_op("abs", &ad::abs<double>, true);
  check_unary_op("abs_pow3", [](Var<double> x) { return abs_pow(x, 3.0); }, true);
  check_unary_op("abs_pow1.5", [](Var<double> x) { return abs_pow(x, 1.5); }, true);
  check_unary_op("scale", [](Var<double> x) { return scale(x, -1.7); }, false);
  check_unary_op("add_scalar", [](Var<double> x) { return add_scalar(x, 0.3); }, false);
  check_unary_op("rsub_scalar", [](Var<double> x) { return rsub_scalar(x, 1.0); }, false);
  check_unary_op("slice_front", [](Var<double> x) { return slice_front(x, 1, 2); }, false);
  check_unary_op("slice_last", [](Var<double> x) { return slice_last(x, 1, 3); }, false);
  check_unary_op("reshape", [](Var<double> x) { return reshape(x, Shape{5, 3}); }, false);
  check_unary_op("mean_leading", [](Var<double> x) { return mean_leading(x); }, false);
  check_unary_op("softmax", [](Var<double> x) { return softmax(reshape(x, Shape{15})); }, false);
  check_unary_op("diff", [](Var<double> x) { return diff(reshape(x, Shape{15})); }, false);
  check_unary_op("sum", [](Var<double> x) { return sum(mul(x, x)); }, false);
  check_unary_op("mean", [](Var<double> x) { return mean(mul(x, x)); }, false);
  check_unary_op("select", [](Var<double> x) { return select(sigmoid(x), 7); }, false);
  check_unary_op("softmax_cross_entropy", [](Var<double> x) { return softmax_cross_entropy(reshape(x, Shape{15}), 4); },
                 false);
}

TEST_CASE("binary and structural ops match finite differences") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed);
    CAPTURE(seed);
    auto a = random_tensor({2, 3, 4}, rng), b = random_tensor({2, 3, 4}, rng);
    for (auto op : {&add<double>, &sub<double>, &mul<double>}) {
      auto rep = check_gradients({a, b}, [&](Tape<double>& t, const auto& v) { return weighted_sum(t, op(v[0], v[1]), seed); });
      CHECK(rep.worst_relative_error < kTol);
    }
    auto c = random_tensor({1, 3, 4}, rng);
    auto rep = check_gradients({a, c}, [&](Tape<double>& t, const auto& v) {
      std::vector<Var<double>> parts{v[0], v[1], v[0]};
      return weighted_sum(t, concat_front<double>(parts), seed);
    });
    CHECK(rep.worst_relative_error < kTol);
    auto bias = random_tensor({4}, rng);
    rep = check_gradients({a, bias}, [&](Tape<double>& t, const auto& v) {
      return weighted_sum(t, add_channel_bias(v[0], v[1]), seed);
    });
    CHECK(rep.worst_relative_error < kTol);
    auto x = random_tensor({5}, rng), w = random_tensor({5, 3}, rng), bb = random_tensor({3}, rng);
    rep = check_gradients({x, w, bb}, [&](Tape<double>& t, const auto& v) {
      return weighted_sum(t, linear(v[0], v[1], v[2]), seed);
    });
    CHECK(rep.worst_relative_error < kTol);
    // Distinct values spaced well beyond 2*eps, so no probe crosses a tie.
    Tensor<double> pool_in(Shape{4, 4, 6, 2});
    for (std::size_t i = 0; i < pool_in.size(); ++i) pool_in[i] = -1.0 + 0.01 * double(i);
    std::shuffle(pool_in.data().begin(), pool_in.data().end(), rng);
    rep = check_gradients({pool_in}, [&](Tape<double>& t, const auto& v) {
      return weighted_sum(t, maxpool(v[0], {2, 2, 3}), seed);
    });
    CHECK(rep.worst_relative_error < kTol);
  }
}

TEST_CASE("batch normalization matches finite differences") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed);
    CAPTURE(seed);
    auto x = random_tensor({3, 2, 2, 3}, rng, -2, 2);
    auto gamma = random_tensor({3}, rng, 0.5, 1.5), beta = random_tensor({3}, rng);
    auto rep = check_gradients({x, gamma, beta}, [&](Tape<double>& t, const auto& v) {
      return weighted_sum(t, batch_norm_train(v[0], v[1], v[2], 1e-5).y, seed);
    });
    CHECK(rep.worst_relative_error < kTol);
    auto rm = random_tensor({3}, rng), rv = random_tensor({3}, rng, 0.5, 2.0);
    rep = check_gradients({x, gamma, beta}, [&](Tape<double>& t, const auto& v) {
      return weighted_sum(t, batch_norm_eval(v[0], v[1], v[2], rm, rv, 1e-5), seed);
    });
    CHECK(rep.worst_relative_error < kTol);
  }
}

TEST_CASE("batch normalization output is standardized per channel") {
  std::mt19937_64 rng(2);
  Tape<double> tape;
  auto x = tape.constant(random_tensor({10, 4}, rng, -3, 5));
  auto out = batch_norm_train(x, tape.constant(Tensor<double>::filled({4}, 1.0)), tape.constant(Tensor<double>({4})), 1e-5);
  for (std::size_t c = 0; c < 4; ++c) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < 10; ++i) m += out.y.value()[i * 4 + c];
    m /= 10;
    for (std::size_t i = 0; i < 10; ++i) v += std::pow(out.y.value()[i * 4 + c] - m, 2);
    CHECK(m == doctest::Approx(0).epsilon(1e-9));
    CHECK(v / 10 == doctest::Approx(1).epsilon(1e-3));
  }
}

TEST_CASE("VTEN round-trips bit-exactly with the documented layout") {
  std::mt19937_64 rng(1);
  auto t = random_tensor({2, 3, 4}, rng).cast<float>();
  std::stringstream buf;
  write_vten(buf, t);
  const std::string bytes = buf.str();
  REQUIRE(bytes.size() == 4 + 1 + 3 * 4 + 24 * 4);
  CHECK(bytes.substr(0, 4) == "VTEN");
  CHECK(bytes[4] == 3);
  CHECK(static_cast<unsigned char>(bytes[5]) == 2);  // little-endian u32
  CHECK(bytes[6] == 0);
  float first;
  std::memcpy(&first, bytes.data() + 17, 4);
  CHECK(first == t[0]);
  CHECK(read_vten(buf) == t);
  std::stringstream bad("VTEX");
  CHECK_THROWS_AS(read_vten(bad), IoError);
}
