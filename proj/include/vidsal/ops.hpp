#pragma once

// Differentiable ops recorded on a Tape. Every op validates shapes, rejects
// non-finite inputs and registers its backward rule. Reductions accumulate in
// double regardless of the storage type.

#include <array>
#include <cstddef>
#include <span>

#include "vidsal/autodiff.hpp"

namespace vidsal::ad {

using Int3 = std::array<std::size_t, 3>;

// Elementwise, identical shapes (no broadcasting).
template <class Real> Var<Real> add(Var<Real> a, Var<Real> b);
template <class Real> Var<Real> sub(Var<Real> a, Var<Real> b);
template <class Real> Var<Real> mul(Var<Real> a, Var<Real> b);

template <class Real> Var<Real> scale(Var<Real> a, Real factor);
template <class Real> Var<Real> add_scalar(Var<Real> a, Real offset);
// offset - a
template <class Real> Var<Real> rsub_scalar(Var<Real> a, Real offset);

template <class Real> Var<Real> sigmoid(Var<Real> a);
template <class Real> Var<Real> tanh(Var<Real> a);
template <class Real> Var<Real> relu(Var<Real> a);
template <class Real> Var<Real> abs(Var<Real> a);
// |a|^exponent, exponent >= 1
template <class Real> Var<Real> abs_pow(Var<Real> a, Real exponent);

// Reductions to a rank-0 scalar.
template <class Real> Var<Real> sum(Var<Real> a);
template <class Real> Var<Real> mean(Var<Real> a);

// Differences along axis 0 of a rank-1 tensor: out[t] = a[t+1] - a[t].
template <class Real> Var<Real> diff(Var<Real> a);

template <class Real> Var<Real> reshape(Var<Real> a, Shape shape);
// Sub-range [begin, begin + count) along axis 0.
template <class Real> Var<Real> slice_front(Var<Real> a, std::size_t begin, std::size_t count);
// Sub-range [begin, begin + count) along the last axis.
template <class Real> Var<Real> slice_last(Var<Real> a, std::size_t begin, std::size_t count);
// Concatenation along axis 0; trailing extents must agree.
template <class Real> Var<Real> concat_front(std::span<const Var<Real>> parts);

// x[..., C] + bias[C]
template <class Real> Var<Real> add_channel_bias(Var<Real> x, Var<Real> bias);
// Mean over every axis but the last: [..., C] -> [C].
template <class Real> Var<Real> mean_leading(Var<Real> x);

// Non-overlapping max pooling of x[T, H, W, C] with stride equal to the
// window. Trailing rows/columns that do not fill a window are dropped.
// Backward routes the gradient to the first maximum in row-major order.
template <class Real> Var<Real> maxpool(Var<Real> x, Int3 window);

// Cross-correlation of x[T, H, W, Cin] with kernel[kt, kh, kw, Cin, Cout].
template <class Real> Var<Real> conv3d(Var<Real> x, Var<Real> kernel, Int3 stride, Int3 padding);

// x[n] . W[n, m] + b[m]
template <class Real> Var<Real> linear(Var<Real> x, Var<Real> weight, Var<Real> bias);

template <class Real> Var<Real> softmax(Var<Real> logits);
// -log softmax(logits)[label]
template <class Real> Var<Real> softmax_cross_entropy(Var<Real> logits, std::size_t label);
// a[index] as a rank-0 scalar
template <class Real> Var<Real> select(Var<Real> a, std::size_t index);

// Per-channel normalization of x[..., C] with statistics over all leading
// axes. Returns the batch mean and biased variance for running averages.
template <class Real>
struct BatchNormOutput {
  Var<Real> y;
  Tensor<Real> mean;
  Tensor<Real> variance;
};
template <class Real>
BatchNormOutput<Real> batch_norm_train(Var<Real> x, Var<Real> gamma, Var<Real> beta, Real eps);
template <class Real>
Var<Real> batch_norm_eval(Var<Real> x, Var<Real> gamma, Var<Real> beta, const Tensor<Real>& running_mean,
                          const Tensor<Real>& running_var, Real eps);

// Rejects a tensor containing NaN/Inf with a message naming the op.
template <class Real> void require_finite(const char* op, const Tensor<Real>& t);

}  // namespace vidsal::ad
