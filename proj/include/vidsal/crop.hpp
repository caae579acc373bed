#pragma once

// Exhaustive search over contiguous temporal crops. A crop [start, end] keeps
// those frames and freezes everything outside to the nearest kept frame.

#include <vector>

#include "vidsal/models.hpp"
#include "vidsal/synthetic.hpp"

namespace vidsal::crop {

struct CropScore {
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
  double score = 0;     // softmax score of the target class
};

struct CropResult {
  std::size_t target_class = 0;
  CropScore best;
  std::vector<CropScore> table;  // T (T + 1) / 2 entries, by start then end
};

// Frames before start repeat clip[start], frames after end repeat clip[end].
TensorF crop_clip(const TensorF& clip, std::size_t start, std::size_t end);

// Highest score wins; ties go to the shorter crop, then the earlier start.
// Crops are scored on up to `jobs` threads; the result does not depend on it.
CropResult exhaustive_crop_search(const models::VideoModel<float>& model, const TensorF& clip, std::size_t target,
                                  std::size_t jobs = 1);

// |mask & crop| / |mask | crop|; two empty sets agree fully.
double mask_crop_agreement(const std::vector<bool>& mask, data::FrameRange crop);

// Fraction of the window's frames that the mask marks active.
double window_recall(const std::vector<bool>& mask, data::FrameRange window);

}  // namespace vidsal::crop
