#pragma once

// Grad-CAM for video: one class-specific map per activation timestep,
//   w[k,t] = mean_ij dF_c / dA[t,i,j,k],   L[t,i,j] = max(0, sum_k w[k,t] A[t,i,j,k])
// with F_c the class logit. Maps are upsampled bilinearly to the input
// resolution and expanded to one map per input frame.

#include <filesystem>
#include <string>
#include <vector>

#include "vidsal/models.hpp"

namespace vidsal::gradcam {

struct SaliencyVolume {
  Tensor<double> maps;  // [T', H', W'], non-negative
  std::vector<std::vector<std::size_t>> frames_of_step;  // input frames each map covers
  std::size_t target_class = 0;

  std::size_t steps() const { return maps.extent(0); }
  std::size_t height() const { return maps.extent(1); }
  std::size_t width() const { return maps.extent(2); }
};

// The weighted, clamped combination for given activations and gradients,
// both [T', H', W', K].
template <class Real>
Tensor<double> cam_maps(const Tensor<Real>& activations, const Tensor<Real>& gradients);

// Throws ValueError for an unknown class.
template <class Real>
SaliencyVolume compute(const models::VideoModel<Real>& model, const Tensor<Real>& clip, std::size_t target);

// Bilinear, half-pixel centres, edges clamped. Targets smaller than the
// source are rejected.
SaliencyVolume upsample(const SaliencyVolume& volume, std::size_t height, std::size_t width);

// [T, H, W]: frame t gets the map of the step that covers it.
Tensor<double> per_frame(const SaliencyVolume& volume, std::size_t frames);

// Grad-CAM, upsampled to the clip resolution, one map per input frame.
template <class Real>
Tensor<double> saliency_frames(const models::VideoModel<Real>& model, const Tensor<Real>& clip, std::size_t target);

// Writes saliency_tNN.pgm (maps scaled by the volume maximum) and
// overlay_tNN.png for every frame; returns the file names, relative to dir.
std::vector<std::string> write_images(const std::filesystem::path& dir, const TensorF& clip,
                                      const Tensor<double>& frames);

}  // namespace vidsal::gradcam
