#include "vidsal/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "vidsal/simd/kernels.hpp"

namespace vidsal::ad {
namespace {

template <class Real>
void require_same_shape(const char* op, const Var<Real>& a, const Var<Real>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

template <class Real>
void require_rank(const char* op, const Var<Real>& a, std::size_t rank) {
  if (a.value().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     shape_string(a.shape()));
  }
}

// Elementwise op whose derivative depends on the input only.
template <class Real, class F, class DF>
Var<Real> unary(const char* op, Var<Real> a, F f, DF df) {
  require_finite(op, a.value());
  const auto& x = a.value();
  Tensor<Real> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  Tape<Real>* tape = a.tape;
  const std::size_t in = a.id;
  return tape->record(std::move(out), {a}, [tape, in, df](const Tensor<Real>& g, std::span<Tensor<Real>* const> gi) {
    const auto& xv = tape->value(in);
    auto& ga = *gi[0];
    for (std::size_t i = 0; i < xv.size(); ++i) ga[i] += g[i] * df(xv[i]);
  });
}

template <class Real>
Real sigmoid_value(Real x) {
  // Branches keep exp() from overflowing for large |x|.
  if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

}  // namespace

template <class Real>
void require_finite(const char* op, const Tensor<Real>& t) {
  if (!t.all_finite()) throw NonFiniteError(std::string(op) + ": non-finite input");
}

template <class Real>
Var<Real> add(Var<Real> a, Var<Real> b) {
  require_same_shape("add", a, b);
  require_finite("add", a.value());
  require_finite("add", b.value());
  Tensor<Real> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return a.tape->record(std::move(out), {a, b}, [](const Tensor<Real>& g, std::span<Tensor<Real>* const> gi) {
    for (auto* slot : gi) {
      if (!slot) continue;
      for (std::size_t i = 0; i < g.size(); ++i) (*slot)[i] += g[i];
    }
  });
}

template <class Real>
Var<Real> sub(Var<Real> a, Var<Real> b) {
  require_same_shape("sub", a, b);
  require_finite("sub", a.value());
  require_finite("sub", b.value());
  Tensor<Real> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return a.tape->record(std::move(out), {a, b}, [](const Tensor<Real>& g, std::span<Tensor<Real>* const> gi) {
    if (gi[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
    if (gi[1])
      for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i] -= g[i];
  });
}

template <class Real>
Var<Real> mul(Var<Real> a, Var<Real> b) {
  require_same_shape("mul", a, b);
  require_finite("mul", a.value());
  require_finite("mul", b.value());
  Tensor<Real> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  Tape<Real>* tape = a.tape;
  const std::size_t ia = a.id, ib = b.id;
  return tape->record(std::move(out), {a, b},
                      [tape, ia, ib](const Tensor<Real>& g, std::span<Tensor<Real>* const> gi) {
                        const auto& av = tape->value(ia);
                        const auto& bv = tape->value(ib);
                        if (gi[0])
                          for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] * bv[i];
                        if (gi[1])
                          for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i] += g[i] * av[i];
                      });
}

template <class Real>
Var<Real> scale(Var<Real> a, Real factor) {
  return unary("scale", a, [factor](Real x) { return factor * x; }, [factor](Real) { return factor; });
}

template <class Real>
Var<Real> add_scalar(Var<Real> a, Real offset) {
  return unary("add_scalar", a, [offset](Real x) { return x + offset; }, [](Real) { return Real(1); });
}

template <class Real>
Var<Real> rsub_scalar(Var<Real> a, Real offset) {
  return unary("rsub_scalar", a, [offset](Real x) { return offset - x; }, [](Real) { return Real(-1); });
}

template <class Real>
Var<Real> sigmoid(Var<Real> a) {
  return unary(
      "sigmoid", a, [](Real x) { return sigmoid_value(x); },
      [](Real x) {
        const Real s = sigmoid_value(x);
        return s * (Real(1) - s);
      });
}

template <class Real>
Var<Real> tanh(Var<Real> a) {
  return unary(
      "tanh", a, [](Real x) { return std::tanh(x); },
      [](Real x) {
        const Real t = std::tanh(x);
        return Real(1) - t * t;
      });
}

template <class Real>
Var<Real> relu(Var<Real> a) {
  return unary(
      "relu", a, [](Real x) { return x > 0 ? x : Real(0); }, [](Real x) { return x > 0 ? Real(1) : Real(0); });
}

template <class Real>
Var<Real> abs(Var<Real> a) {
  return unary(
      "abs", a, [](Real x) { return std::abs(x); },
      [](Real x) { return x > 0 ? Real(1) : (x < 0 ? Real(-1) : Real(0)); });
}

template <class Real>
Var<Real> abs_pow(Var<Real> a, Real exponent) {
  if (!(exponent >= 1)) throw ValueError("abs_pow: exponent must be >= 1");
  return unary(
      "abs_pow", a, [exponent](Real x) { return std::pow(std::abs(x), exponent); },
      [exponent](Real x) {
        if (x == 0) return Real(0);
        const Real sign = x > 0 ? Real(1) : Real(-1);
        return sign * exponent * std::pow(std::abs(x), exponent - 1);
      });
}

template <class Real>
Var<Real> sum(Var<Real> a) {
  require_finite("sum", a.value());
  double acc = 0;
  for (Real v : a.value().data()) acc += v;
  return a.tape->record(Tensor<Real>::scalar(static_cast<Real>(acc)), {a},
                        [](const Tensor<Real>& g, std::span<Tensor<Real>* const> gi) {
                          const Real gv = g[0];
                          for (auto& v : gi[0]->data()) v += gv;
                        });
}

template <class Real>
Var<Real> mean(Var<Real> a) {
  require_finite("mean", a.value());
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean: empty tensor");
  double acc = 0;
  for (Real v : a.value().data()) acc += v;
  return a.tape->record(Tensor<Real>::scalar(static_cast<Real>(acc / double(n))), {a},
                        [n](const Tensor<Real>& g, std::span<Tensor<Real>* const> gi) {
                          const Real gv = static_cast<Real>(g[0] / double(n));
                          for (auto& v : gi[0]->data()) v += gv;
                        });
}

template <class Real>
Var<Real> diff(Var<Real> a) {
  require_rank("diff", a, 1);
  require_finite("diff", a.value());
  const std::size_t n = a.value().size();
  if (n < 2) throw ShapeError("diff: need at least 2 elements");
  Tensor<Real> out(Shape{n - 1});
  for (std::size_t t = 0; t + 1 < n; ++t) out[t] = a.value()[t + 1] - a.value()[t];
  return a.tape->record(std::move(out), {a}, [](const Tensor<Real>& g, std::span<Tensor<Real>* const> gi) {
    auto& ga = *gi[0];
    for (std::size_t t = 0; t < g.size(); ++t) {
      ga[t + 1] += g[t];
      ga[t] -= g[t];
    }
  });
}

template <class Real>
Var<Real> reshape(Var<Real> a, Shape shape) {
  Tensor<Real> out = a.value().reshaped(std::move(shape));
  return a.tape->record(std::move(out), {a}, [](const Tensor<Real>& g, std::span<Tensor<Real>* const> gi) {
    auto& ga = *gi[0];
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

template <class Real>
Var<Real> slice_front(Var<Real> a, std::size_t begin, std::size_t count) {
  const auto& x = a.value();
  if (x.rank() == 0 || begin + count > x.extent(0)) {
    throw ShapeError("slice_front: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside " + shape_string(x.shape()));
  }
  const std::size_t inner = x.size() / x.extent(0);
  Shape shape = x.shape();
  shape[0] = count;
  std::vector<Real> data(x.data().begin() + begin * inner, x.data().begin() + (begin + count) * inner);
  const std::size_t off = begin * inner;
  return a.tape->record(Tensor<Real>(std::move(shape), std::move(data)), {a},
                        [off](const Tensor<Real>& g, std::span<Tensor<Real>* const> gi) {
                          auto& ga = *gi[0];
                          for (std::size_t i = 0; i < g.size(); ++i) ga[off + i] += g[i];
                        });
}

template <class Real>
Var<Real> slice_last(Var<Real> a, std::size_t begin, std::size_t count) {
  const auto& x = a.value();
  if (x.rank() == 0 || begin + count > x.shape().back()) {
    throw ShapeError("slice_last: range outside " + shape_string(x.shape()));
  }
  const std::size_t c = x.shape().back();
  const std::size_t outer = x.size() / c;
  Shape shape = x.shape();
  shape.back() = count;
  Tensor<Real> out(shape);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < count; ++k) out[o * count + k] = x[o * c + begin + k];
  return a.tape->record(std::move(out), {a},
                        [outer, c, begin, count](const Tensor<Real>& g, std::span<Tensor<Real>* const> gi) {
                          auto& ga = *gi[0];
                          for (std::size_t o = 0; o < outer; ++o)
                            for (std::size_t k = 0; k < count; ++k) ga[o * c + begin + k] += g[o * count + k];
                        });
}

template <class Real>
Var<Real> concat_front(std::span<const Var<Real>> parts) {
  if (parts.empty()) throw ShapeError("concat_front: no inputs");
  Shape shape = parts[0].shape();
  if (shape.empty()) throw ShapeError("concat_front: rank-0 input");
  std::size_t total = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != shape.size() || !std::equal(s.begin() + 1, s.end(), shape.begin() + 1)) {
      throw ShapeError("concat_front: trailing extents differ " + shape_string(s) + " vs " + shape_string(shape));
    }
    offsets.push_back(total);
    total += p.value().size();
  }
  std::size_t lead = 0;
  for (const auto& p : parts) lead += p.shape()[0];
  shape[0] = lead;
  std::vector<Real> data;
  data.reserve(total);
  for (const auto& p : parts) data.insert(data.end(), p.value().data().begin(), p.value().data().end());
  return parts[0].tape->record(Tensor<Real>(std::move(shape), std::move(data)),
                               std::vector<Var<Real>>(parts.begin(), parts.end()),
                               [offsets](const Tensor<Real>& g, std::span<Tensor<Real>* const> gi) {
                                 for (std::size_t k = 0; k < gi.size(); ++k) {
                                   if (!gi[k]) continue;
                                   auto& gk = *gi[k];
                                   for (std::size_t i = 0; i < gk.size(); ++i) gk[i] += g[offsets[k] + i];
                                 }
                               });
}

template <class Real>
Var<Real> add_channel_bias(Var<Real> x, Var<Real> bias) {
  require_rank("add_channel_bias(bias)", bias, 1);
  const auto& xv = x.value();
  if (xv.rank() == 0 || xv.shape().back() != bias.value().size()) {
    throw ShapeError("add_channel_bias: " + shape_string(xv.shape()) + " vs bias " + shape_string(bias.shape()));
  }
  require_finite("add_channel_bias", xv);
  require_finite("add_channel_bias", bias.value());
  const std::size_t c = bias.value().size();
  Tensor<Real> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] + bias.value()[i % c];
  return x.tape->record(std::move(out), {x, bias}, [c](const Tensor<Real>& g, std::span<Tensor<Real>* const> gi) {
    if (gi[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
    if (gi[1]) {
      std::vector<double> acc(c, 0.0);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i % c] += g[i];
      for (std::size_t k = 0; k < c; ++k) (*gi[1])[k] += static_cast<Real>(acc[k]);
    }
  });
}

template <class Real>
Var<Real> mean_leading(Var<Real> x) {
  const auto& xv = x.value();
  if (xv.rank() < 1) throw ShapeError("mean_leading: rank-0 input");
  require_finite("mean_leading", xv);
  const std::size_t c = xv.shape().back();
  const std::size_t n = xv.size() / c;
  if (n == 0) throw ShapeError("mean_leading: empty input");
  std::vector<double> acc(c, 0.0);
  for (std::size_t i = 0; i < xv.size(); ++i) acc[i % c] += xv[i];
  Tensor<Real> out(Shape{c});
  for (std::size_t k = 0; k < c; ++k) out[k] = static_cast<Real>(acc[k] / double(n));
  return x.tape->record(std::move(out), {x}, [c, n](const Tensor<Real>& g, std::span<Tensor<Real>* const> gi) {
    auto& gx = *gi[0];
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += static_cast<Real>(g[i % c] / double(n));
  });
}

template <class Real>
Var<Real> maxpool(Var<Real> x, Int3 window) {
  require_rank("maxpool", x, 4);
  const auto& xv = x.value();
  require_finite("maxpool", xv);
  const std::size_t T = xv.extent(0), H = xv.extent(1), W = xv.extent(2), C = xv.extent(3);
  const auto [wt, wh, ww] = window;
  if (wt == 0 || wh == 0 || ww == 0 || wt > T || wh > H || ww > W) {
    throw ShapeError("maxpool: window larger than input " + shape_string(xv.shape()));
  }
  const std::size_t To = T / wt, Ho = H / wh, Wo = W / ww;
  Tensor<Real> out(Shape{To, Ho, Wo, C});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t t = 0; t < To; ++t)
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t xo = 0; xo < Wo; ++xo)
        for (std::size_t c = 0; c < C; ++c) {
          std::size_t best = std::numeric_limits<std::size_t>::max();
          Real best_v = 0;
          // Row-major window order so ties go to the first element.
          for (std::size_t dt = 0; dt < wt; ++dt)
            for (std::size_t dy = 0; dy < wh; ++dy)
              for (std::size_t dx = 0; dx < ww; ++dx) {
                const std::size_t idx = (((t * wt + dt) * H + (y * wh + dy)) * W + (xo * ww + dx)) * C + c;
                if (best == std::numeric_limits<std::size_t>::max() || xv[idx] > best_v) {
                  best = idx;
                  best_v = xv[idx];
                }
              }
          const std::size_t o = ((t * Ho + y) * Wo + xo) * C + c;
          out[o] = best_v;
          argmax[o] = best;
        }
  return x.tape->record(std::move(out), {x},
                        [argmax = std::move(argmax)](const Tensor<Real>& g, std::span<Tensor<Real>* const> gi) {
                          auto& gx = *gi[0];
                          for (std::size_t o = 0; o < g.size(); ++o) gx[argmax[o]] += g[o];
                        });
}

namespace {

struct ConvGeometry {
  std::size_t T, H, W, Cin;
  std::size_t kt, kh, kw, Cout;
  Int3 stride, pad;
  std::size_t To, Ho, Wo;
};

std::size_t conv_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad, const char* axis) {
  if (stride == 0) throw ShapeError(std::string("conv3d: stride along ") + axis + " must be >= 1");
  if (k > in + 2 * pad) {
    throw ShapeError(std::string("conv3d: kernel extent ") + std::to_string(k) + " exceeds padded input " +
                     std::to_string(in + 2 * pad) + " along " + axis);
  }
  return (in + 2 * pad - k) / stride + 1;
}

// Row p of the patch matrix holds the receptive field of output position p,
// laid out like a kernel slice [kt, kh, kw, Cin]; padding taps stay zero.
// For fixed (p, dt, dy) the in-bounds dx taps read one contiguous input run,
// so visit(col, in, count) is called once per run.
template <class Fn>
void for_each_patch_run(const ConvGeometry& g, Fn&& visit) {
  const std::size_t width = g.kt * g.kh * g.kw * g.Cin;
  std::size_t p = 0;
  for (std::size_t to = 0; to < g.To; ++to)
    for (std::size_t yo = 0; yo < g.Ho; ++yo)
      for (std::size_t xo = 0; xo < g.Wo; ++xo, ++p) {
        const std::ptrdiff_t x0 = std::ptrdiff_t(xo * g.stride[2]) - std::ptrdiff_t(g.pad[2]);
        const std::size_t dx0 = x0 < 0 ? std::size_t(-x0) : 0;
        const std::size_t dx1 = std::size_t(std::clamp<std::ptrdiff_t>(std::ptrdiff_t(g.W) - x0, 0, std::ptrdiff_t(g.kw)));
        if (dx0 >= dx1) continue;
        const std::size_t count = (dx1 - dx0) * g.Cin;
        const std::size_t row = p * width;
        for (std::size_t dt = 0; dt < g.kt; ++dt) {
          const std::ptrdiff_t ti = std::ptrdiff_t(to * g.stride[0] + dt) - std::ptrdiff_t(g.pad[0]);
          if (ti < 0 || ti >= std::ptrdiff_t(g.T)) continue;
          for (std::size_t dy = 0; dy < g.kh; ++dy) {
            const std::ptrdiff_t yi = std::ptrdiff_t(yo * g.stride[1] + dy) - std::ptrdiff_t(g.pad[1]);
            if (yi < 0 || yi >= std::ptrdiff_t(g.H)) continue;
            const std::size_t in =
                ((std::size_t(ti) * g.H + std::size_t(yi)) * g.W + std::size_t(x0 + std::ptrdiff_t(dx0))) * g.Cin;
            visit(row + ((dt * g.kh + dy) * g.kw + dx0) * g.Cin, in, count);
          }
        }
      }
}

template <class Real>
std::vector<Real> im2col(const ConvGeometry& g, const Real* in) {
  std::vector<Real> cols(g.To * g.Ho * g.Wo * g.kt * g.kh * g.kw * g.Cin, Real(0));
  for_each_patch_run(g, [&](std::size_t c, std::size_t i, std::size_t n) { std::copy_n(in + i, n, cols.data() + c); });
  return cols;
}

template <class Real>
std::vector<Real> transposed(const Real* a, std::size_t rows, std::size_t cols) {
  std::vector<Real> t(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = a[r * cols + c];
  return t;
}

}  // namespace

template <class Real>
Var<Real> conv3d(Var<Real> x, Var<Real> kernel, Int3 stride, Int3 padding) {
  const auto& xv = x.value();
  const auto& kv = kernel.value();
  if (xv.rank() != 4 || kv.rank() != 5) {
    throw ShapeError("conv3d: expected input [T,H,W,Cin] and kernel [kt,kh,kw,Cin,Cout], got " +
                     shape_string(xv.shape()) + " and " + shape_string(kv.shape()));
  }
  if (xv.extent(3) != kv.extent(3)) {
    throw ShapeError("conv3d: input channels " + std::to_string(xv.extent(3)) + " != kernel channels " +
                     std::to_string(kv.extent(3)) + " (input " + shape_string(xv.shape()) + ", kernel " +
                     shape_string(kv.shape()) + ")");
  }
  require_finite("conv3d", xv);
  require_finite("conv3d", kv);
  ConvGeometry g{xv.extent(0), xv.extent(1), xv.extent(2), xv.extent(3), kv.extent(0), kv.extent(1),
                 kv.extent(2), kv.extent(4), stride,       padding,      0,            0,
                 0};
  g.To = conv_extent(g.T, g.kt, stride[0], padding[0], "time");
  g.Ho = conv_extent(g.H, g.kh, stride[1], padding[1], "height");
  g.Wo = conv_extent(g.W, g.kw, stride[2], padding[2], "width");

  const std::size_t P = g.To * g.Ho * g.Wo, width = g.kt * g.kh * g.kw * g.Cin;
  Tensor<Real> out(Shape{g.To, g.Ho, g.Wo, g.Cout});
  {
    const auto cols = im2col(g, xv.data().data());
    simd::kernels<Real>().gemm(cols.data(), kv.data().data(), out.data().data(), P, width, g.Cout);
  }

  Tape<Real>* tape = x.tape;
  const std::size_t ix = x.id, ik = kernel.id;
  return tape->record(std::move(out), {x, kernel},
                      [tape, ix, ik, g, P, width](const Tensor<Real>& grad, std::span<Tensor<Real>* const> gi) {
                        const auto& K = simd::kernels<Real>();
                        const Real* gp = grad.data().data();
                        if (gi[0]) {
                          const auto kt = transposed(tape->value(ik).data().data(), width, g.Cout);
                          std::vector<Real> dcols(P * width, Real(0));
                          K.gemm(gp, kt.data(), dcols.data(), P, g.Cout, width);
                          Real* gx = gi[0]->data().data();
                          for_each_patch_run(g, [&](std::size_t c, std::size_t i, std::size_t n) {
                            for (std::size_t k = 0; k < n; ++k) gx[i + k] += dcols[c + k];
                          });
                        }
                        if (gi[1]) {
                          const auto cols = im2col(g, tape->value(ix).data().data());
                          const auto cols_t = transposed(cols.data(), P, width);
                          K.gemm(cols_t.data(), gp, gi[1]->data().data(), width, P, g.Cout);
                        }
                      });
}

template <class Real>
Var<Real> linear(Var<Real> x, Var<Real> weight, Var<Real> bias) {
  require_rank("linear(x)", x, 1);
  require_rank("linear(weight)", weight, 2);
  require_rank("linear(bias)", bias, 1);
  const std::size_t n = x.value().size(), m = bias.value().size();
  if (weight.value().extent(0) != n || weight.value().extent(1) != m) {
    throw ShapeError("linear: x " + shape_string(x.shape()) + ", weight " + shape_string(weight.shape()) +
                     ", bias " + shape_string(bias.shape()));
  }
  require_finite("linear", x.value());
  require_finite("linear", weight.value());
  require_finite("linear", bias.value());
  Tensor<Real> out = bias.value();
  const auto& K = simd::kernels<Real>();
  K.gemv_t(x.value().data().data(), n, weight.value().data().data(), m, out.data().data());
  Tape<Real>* tape = x.tape;
  const std::size_t ix = x.id, iw = weight.id;
  return tape->record(std::move(out), {x, weight, bias},
                      [tape, ix, iw, n, m](const Tensor<Real>& g, std::span<Tensor<Real>* const> gi) {
                        const auto& K = simd::kernels<Real>();
                        if (gi[0]) K.gemv(tape->value(iw).data().data(), n, m, g.data().data(), gi[0]->data().data());
                        if (gi[1]) K.ger(tape->value(ix).data().data(), n, g.data().data(), m, gi[1]->data().data());
                        if (gi[2])
                          for (std::size_t j = 0; j < m; ++j) (*gi[2])[j] += g[j];
                      });
}

template <class Real>
Var<Real> softmax(Var<Real> logits) {
  require_rank("softmax", logits, 1);
  const auto& z = logits.value();
  require_finite("softmax", z);
  const std::size_t n = z.size();
  const double zmax = *std::max_element(z.data().begin(), z.data().end());
  std::vector<double> e(n);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) total += e[i] = std::exp(double(z[i]) - zmax);
  Tensor<Real> out(Shape{n});
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<Real>(e[i] / total);
  std::vector<double> probs(n);
  for (std::size_t i = 0; i < n; ++i) probs[i] = e[i] / total;
  return logits.tape->record(std::move(out), {logits},
                             [probs = std::move(probs)](const Tensor<Real>& g, std::span<Tensor<Real>* const> gi) {
                               double dot = 0;
                               for (std::size_t i = 0; i < probs.size(); ++i) dot += g[i] * probs[i];
                               for (std::size_t i = 0; i < probs.size(); ++i)
                                 (*gi[0])[i] += static_cast<Real>(probs[i] * (g[i] - dot));
                             });
}

template <class Real>
Var<Real> softmax_cross_entropy(Var<Real> logits, std::size_t label) {
  require_rank("softmax_cross_entropy", logits, 1);
  const auto& z = logits.value();
  require_finite("softmax_cross_entropy", z);
  const std::size_t n = z.size();
  if (label >= n) throw ValueError("softmax_cross_entropy: label " + std::to_string(label) + " out of range");
  const double zmax = *std::max_element(z.data().begin(), z.data().end());
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) total += std::exp(double(z[i]) - zmax);
  const double log_total = std::log(total) + zmax;
  std::vector<double> probs(n);
  for (std::size_t i = 0; i < n; ++i) probs[i] = std::exp(double(z[i]) - log_total);
  const Real loss = static_cast<Real>(log_total - double(z[label]));
  return logits.tape->record(
      Tensor<Real>::scalar(loss), {logits},
      [probs = std::move(probs), label](const Tensor<Real>& g, std::span<Tensor<Real>* const> gi) {
        for (std::size_t i = 0; i < probs.size(); ++i)
          (*gi[0])[i] += static_cast<Real>(g[0] * (probs[i] - (i == label ? 1.0 : 0.0)));
      });
}

template <class Real>
Var<Real> select(Var<Real> a, std::size_t index) {
  if (index >= a.value().size()) throw ValueError("select: index " + std::to_string(index) + " out of range");
  return a.tape->record(Tensor<Real>::scalar(a.value()[index]), {a},
                        [index](const Tensor<Real>& g, std::span<Tensor<Real>* const> gi) {
                          (*gi[0])[index] += g[0];
                        });
}

template <class Real>
BatchNormOutput<Real> batch_norm_train(Var<Real> x, Var<Real> gamma, Var<Real> beta, Real eps) {
  const auto& xv = x.value();
  if (xv.rank() < 1) throw ShapeError("batch_norm: rank-0 input");
  const std::size_t c = xv.shape().back();
  if (gamma.value().size() != c || beta.value().size() != c) {
    throw ShapeError("batch_norm: channel count mismatch for " + shape_string(xv.shape()));
  }
  require_finite("batch_norm", xv);
  const std::size_t n = xv.size() / c;
  if (n == 0) throw ShapeError("batch_norm: empty input");
  std::vector<double> mu(c, 0.0), var(c, 0.0);
  for (std::size_t i = 0; i < xv.size(); ++i) mu[i % c] += xv[i];
  for (auto& m : mu) m /= double(n);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double d = xv[i] - mu[i % c];
    var[i % c] += d * d;
  }
  for (auto& v : var) v /= double(n);
  std::vector<double> inv_std(c);
  for (std::size_t k = 0; k < c; ++k) inv_std[k] = 1.0 / std::sqrt(var[k] + double(eps));

  Tensor<Real> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const std::size_t k = i % c;
    out[i] = static_cast<Real>(gamma.value()[k] * (xv[i] - mu[k]) * inv_std[k] + beta.value()[k]);
  }
  Tape<Real>* tape = x.tape;
  const std::size_t ix = x.id, ig = gamma.id;
  BatchNormOutput<Real> result;
  result.y = tape->record(
      std::move(out), {x, gamma, beta},
      [tape, ix, ig, c, n, mu, inv_std](const Tensor<Real>& g, std::span<Tensor<Real>* const> gi) {
        const auto& xv = tape->value(ix);
        const auto& gam = tape->value(ig);
        std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const std::size_t k = i % c;
          sum_g[k] += g[i];
          sum_gx[k] += g[i] * (xv[i] - mu[k]) * inv_std[k];
        }
        if (gi[0]) {
          for (std::size_t i = 0; i < g.size(); ++i) {
            const std::size_t k = i % c;
            const double xhat = (xv[i] - mu[k]) * inv_std[k];
            (*gi[0])[i] += static_cast<Real>(gam[k] * inv_std[k] / double(n) *
                                             (double(n) * g[i] - sum_g[k] - xhat * sum_gx[k]));
          }
        }
        if (gi[1])
          for (std::size_t k = 0; k < c; ++k) (*gi[1])[k] += static_cast<Real>(sum_gx[k]);
        if (gi[2])
          for (std::size_t k = 0; k < c; ++k) (*gi[2])[k] += static_cast<Real>(sum_g[k]);
      });
  result.mean = Tensor<Real>(Shape{c});
  result.variance = Tensor<Real>(Shape{c});
  for (std::size_t k = 0; k < c; ++k) {
    result.mean[k] = static_cast<Real>(mu[k]);
    result.variance[k] = static_cast<Real>(var[k]);
  }
  return result;
}

template <class Real>
Var<Real> batch_norm_eval(Var<Real> x, Var<Real> gamma, Var<Real> beta, const Tensor<Real>& running_mean,
                          const Tensor<Real>& running_var, Real eps) {
  const auto& xv = x.value();
  if (xv.rank() < 1) throw ShapeError("batch_norm: rank-0 input");
  const std::size_t c = xv.shape().back();
  if (gamma.value().size() != c || beta.value().size() != c || running_mean.size() != c || running_var.size() != c) {
    throw ShapeError("batch_norm: channel count mismatch for " + shape_string(xv.shape()));
  }
  require_finite("batch_norm", xv);
  std::vector<double> inv_std(c), mu(c);
  for (std::size_t k = 0; k < c; ++k) {
    mu[k] = running_mean[k];
    inv_std[k] = 1.0 / std::sqrt(double(running_var[k]) + double(eps));
  }
  Tensor<Real> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const std::size_t k = i % c;
    out[i] = static_cast<Real>(gamma.value()[k] * (xv[i] - mu[k]) * inv_std[k] + beta.value()[k]);
  }
  Tape<Real>* tape = x.tape;
  const std::size_t ix = x.id, ig = gamma.id;
  return tape->record(std::move(out), {x, gamma, beta},
                      [tape, ix, ig, c, mu, inv_std](const Tensor<Real>& g, std::span<Tensor<Real>* const> gi) {
                        const auto& xv = tape->value(ix);
                        const auto& gam = tape->value(ig);
                        for (std::size_t i = 0; i < g.size(); ++i) {
                          const std::size_t k = i % c;
                          if (gi[0]) (*gi[0])[i] += static_cast<Real>(g[i] * gam[k] * inv_std[k]);
                          if (gi[1]) (*gi[1])[k] += static_cast<Real>(g[i] * (xv[i] - mu[k]) * inv_std[k]);
                          if (gi[2]) (*gi[2])[k] += g[i];
                        }
                      });
}

#define VIDSAL_INSTANTIATE_OPS(R)                                                                   \
  template void require_finite<R>(const char*, const Tensor<R>&);                                   \
  template Var<R> add<R>(Var<R>, Var<R>);                                                           \
  template Var<R> sub<R>(Var<R>, Var<R>);                                                           \
  template Var<R> mul<R>(Var<R>, Var<R>);                                                           \
  template Var<R> scale<R>(Var<R>, R);                                                              \
  template Var<R> add_scalar<R>(Var<R>, R);                                                         \
  template Var<R> rsub_scalar<R>(Var<R>, R);                                                        \
  template Var<R> sigmoid<R>(Var<R>);                                                               \
  template Var<R> tanh<R>(Var<R>);                                                                  \
  template Var<R> relu<R>(Var<R>);                                                                  \
  template Var<R> abs<R>(Var<R>);                                                                   \
  template Var<R> abs_pow<R>(Var<R>, R);                                                            \
  template Var<R> sum<R>(Var<R>);                                                                   \
  template Var<R> mean<R>(Var<R>);                                                                  \
  template Var<R> diff<R>(Var<R>);                                                                  \
  template Var<R> reshape<R>(Var<R>, Shape);                                                        \
  template Var<R> slice_front<R>(Var<R>, std::size_t, std::size_t);                                 \
  template Var<R> slice_last<R>(Var<R>, std::size_t, std::size_t);                                  \
  template Var<R> concat_front<R>(std::span<const Var<R>>);                                         \
  template Var<R> add_channel_bias<R>(Var<R>, Var<R>);                                              \
  template Var<R> mean_leading<R>(Var<R>);                                                          \
  template Var<R> maxpool<R>(Var<R>, Int3);                                                         \
  template Var<R> conv3d<R>(Var<R>, Var<R>, Int3, Int3);                                            \
  template Var<R> linear<R>(Var<R>, Var<R>, Var<R>);                                                \
  template Var<R> softmax<R>(Var<R>);                                                               \
  template Var<R> softmax_cross_entropy<R>(Var<R>, std::size_t);                                    \
  template Var<R> select<R>(Var<R>, std::size_t);                                                   \
  template BatchNormOutput<R> batch_norm_train<R>(Var<R>, Var<R>, Var<R>, R);                       \
  template Var<R> batch_norm_eval<R>(Var<R>, Var<R>, Var<R>, const Tensor<R>&, const Tensor<R>&, R);

VIDSAL_INSTANTIATE_OPS(float)
VIDSAL_INSTANTIATE_OPS(double)

}  // namespace vidsal::ad
