#pragma once

// Temporal freeze and reverse perturbations of a clip [T, ...] under a mask
// with one entry per frame.

#include <span>
#include <vector>

#include "vidsal/autodiff.hpp"
#include "vidsal/synthetic.hpp"

namespace vidsal {

inline constexpr double kMaskThreshold = 0.1;

// Inclusive run of active frames.
using SubMaskRange = data::FrameRange;

// out[0] = clip[0]; out[i] = (1 - m[i]) clip[i] + m[i] out[i-1]. m[0] is ignored.
template <class Real>
Tensor<Real> apply_freeze(const Tensor<Real>& clip, std::span<const Real> m);

namespace ad {
// Differentiable freeze; gradients flow to both the clip and the mask.
template <class Real>
Var<Real> freeze(Var<Real> clip, Var<Real> m);
}  // namespace ad

// m[i] > threshold, threshold in (0, 1).
template <class Real>
std::vector<bool> threshold_mask(std::span<const Real> m, double threshold = kMaskThreshold);

// Maximal runs of true entries, ascending.
std::vector<SubMaskRange> extract_submasks(const std::vector<bool>& active);
template <class Real>
std::vector<SubMaskRange> extract_submasks(std::span<const Real> m, double threshold = kMaskThreshold) {
  return extract_submasks(threshold_mask(m, threshold));
}

// Source frame of every output frame when each sub-mask range is reversed.
std::vector<std::size_t> reverse_order(const std::vector<bool>& active);

template <class Real>
Tensor<Real> apply_reverse(const Tensor<Real>& clip, const std::vector<bool>& active);
template <class Real>
Tensor<Real> apply_reverse(const Tensor<Real>& clip, std::span<const Real> m, double threshold = kMaskThreshold) {
  return apply_reverse(clip, threshold_mask(m, threshold));
}

}  // namespace vidsal
