#include "vidsal/perturbation.hpp"

#include <algorithm>
#include <string>

#include "vidsal/ops.hpp"

namespace vidsal {
namespace {

void require_mask_length(const char* op, const Shape& clip, std::size_t mask) {
  if (clip.empty() || clip[0] != mask) {
    throw ShapeError(std::string(op) + ": mask of length " + std::to_string(mask) + " for clip " +
                     shape_string(clip));
  }
}

}  // namespace

template <class Real>
Tensor<Real> apply_freeze(const Tensor<Real>& clip, std::span<const Real> m) {
  require_mask_length("apply_freeze", clip.shape(), m.size());
  const std::size_t T = m.size();
  const std::size_t frame = T == 0 ? 0 : clip.size() / T;
  Tensor<Real> out = clip;
  auto o = out.data();
  for (std::size_t i = 1; i < T; ++i) {
    for (std::size_t p = 0; p < frame; ++p) {
      o[i * frame + p] = (Real(1) - m[i]) * o[i * frame + p] + m[i] * o[(i - 1) * frame + p];
    }
  }
  return out;
}

namespace ad {

template <class Real>
Var<Real> freeze(Var<Real> clip, Var<Real> m) {
  if (m.value().rank() != 1) throw ShapeError("freeze: mask must be rank 1, got " + shape_string(m.shape()));
  require_finite("freeze", clip.value());
  require_finite("freeze", m.value());
  Tensor<Real> out = apply_freeze(clip.value(), m.value().data());
  Tape<Real>* tape = clip.tape;
  const std::size_t ic = clip.id, im = m.id, io = tape->size();
  return tape->record(std::move(out), {clip, m},
                      [tape, ic, im, io](const Tensor<Real>& g, std::span<Tensor<Real>* const> gi) {
                        const auto& x = tape->value(ic);
                        const auto& mv = tape->value(im);
                        const auto& y = tape->value(io);
                        const std::size_t T = mv.size(), frame = x.size() / T;
                        // Running dL/dout[i], including the path through out[i+1].
                        std::vector<Real> carry(g.data().begin(), g.data().end());
                        for (std::size_t i = T; i-- > 1;) {
                          Real gm = 0;
                          for (std::size_t p = 0; p < frame; ++p) {
                            const std::size_t k = i * frame + p;
                            gm += carry[k] * (y[k - frame] - x[k]);
                            if (gi[0]) (*gi[0])[k] += carry[k] * (Real(1) - mv[i]);
                            carry[k - frame] += carry[k] * mv[i];
                          }
                          if (gi[1]) (*gi[1])[i] += gm;
                        }
                        if (gi[0])
                          for (std::size_t p = 0; p < frame && T > 0; ++p) (*gi[0])[p] += carry[p];
                      });
}

}  // namespace ad

template <class Real>
std::vector<bool> threshold_mask(std::span<const Real> m, double threshold) {
  if (!(threshold > 0 && threshold < 1)) {
    throw ValueError("threshold_mask: threshold " + std::to_string(threshold) + " outside (0, 1)");
  }
  std::vector<bool> active(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) active[i] = double(m[i]) > threshold;
  return active;
}

std::vector<SubMaskRange> extract_submasks(const std::vector<bool>& active) {
  std::vector<SubMaskRange> ranges;
  for (std::size_t i = 0; i < active.size(); ++i) {
    if (!active[i]) continue;
    if (!ranges.empty() && ranges.back().end + 1 == i) {
      ranges.back().end = i;
    } else {
      ranges.push_back({i, i});
    }
  }
  return ranges;
}

std::vector<std::size_t> reverse_order(const std::vector<bool>& active) {
  std::vector<std::size_t> order(active.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (const auto& r : extract_submasks(active)) {
    std::reverse(order.begin() + std::ptrdiff_t(r.start), order.begin() + std::ptrdiff_t(r.end + 1));
  }
  return order;
}

template <class Real>
Tensor<Real> apply_reverse(const Tensor<Real>& clip, const std::vector<bool>& active) {
  require_mask_length("apply_reverse", clip.shape(), active.size());
  const auto order = reverse_order(active);
  const std::size_t frame = active.empty() ? 0 : clip.size() / active.size();
  Tensor<Real> out(clip.shape());
  for (std::size_t t = 0; t < order.size(); ++t) {
    std::copy_n(clip.data().begin() + std::ptrdiff_t(order[t] * frame), frame,
                out.data().begin() + std::ptrdiff_t(t * frame));
  }
  return out;
}

#define VIDSAL_INSTANTIATE_PERTURBATION(R)                                                  \
  template Tensor<R> apply_freeze(const Tensor<R>&, std::span<const R>);                    \
  template ad::Var<R> ad::freeze(ad::Var<R>, ad::Var<R>);                                   \
  template std::vector<bool> threshold_mask(std::span<const R>, double);                    \
  template Tensor<R> apply_reverse(const Tensor<R>&, const std::vector<bool>&);

VIDSAL_INSTANTIATE_PERTURBATION(float)
VIDSAL_INSTANTIATE_PERTURBATION(double)

}  // namespace vidsal
