#include "vidsal/crop.hpp"

#include <algorithm>
#include <exception>
#include <thread>

#include "vidsal/mask.hpp"

namespace vidsal::crop {

TensorF crop_clip(const TensorF& clip, std::size_t start, std::size_t end) {
  if (clip.rank() < 1 || clip.extent(0) == 0) throw ShapeError("crop: empty clip");
  const std::size_t T = clip.extent(0);
  if (start > end || end >= T) {
    throw ValueError("crop: range [" + std::to_string(start) + ", " + std::to_string(end) + "] outside " +
                     std::to_string(T) + " frames");
  }
  const std::size_t F = clip.size() / T;
  TensorF out(clip.shape());
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t src = std::clamp(t, start, end);
    std::copy_n(clip.data().begin() + std::ptrdiff_t(src * F), F, out.data().begin() + std::ptrdiff_t(t * F));
  }
  return out;
}

CropResult exhaustive_crop_search(const models::VideoModel<float>& model, const TensorF& clip, std::size_t target,
                                  std::size_t jobs) {
  if (clip.rank() != 4 || clip.extent(0) == 0) throw ShapeError("crop: need a clip [T>=1, H, W, C]");
  if (target >= model.num_classes()) throw ValueError("crop: class " + std::to_string(target) + " out of range");
  const std::size_t T = clip.extent(0);
  CropResult r;
  r.target_class = target;
  for (std::size_t s = 0; s < T; ++s)
    for (std::size_t e = s; e < T; ++e) r.table.push_back({s, e, 0.0});

  auto work = [&](std::size_t first, std::size_t step) {
    for (std::size_t i = first; i < r.table.size(); i += step) {
      auto& c = r.table[i];
      c.score = mask::class_score(model, crop_clip(clip, c.start, c.end), target);
    }
  };
  jobs = std::clamp<std::size_t>(jobs, 1, r.table.size());
  if (jobs == 1) {
    work(0, 1);
  } else {
    std::vector<std::exception_ptr> errors(jobs);
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j)
      pool.emplace_back([&, j] {
        try {
          work(j, jobs);
        } catch (...) {
          errors[j] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  r.best = r.table.front();
  for (const auto& c : r.table) {
    const std::size_t len = c.end - c.start, best_len = r.best.end - r.best.start;
    if (c.score > r.best.score || (c.score == r.best.score && (len < best_len || (len == best_len && c.start < r.best.start)))) {
      r.best = c;
    }
  }
  return r;
}

double mask_crop_agreement(const std::vector<bool>& mask, data::FrameRange crop) {
  if (crop.start > crop.end || crop.end >= mask.size()) throw ValueError("crop agreement: range outside the mask");
  std::size_t both = 0, either = 0;
  for (std::size_t t = 0; t < mask.size(); ++t) {
    const bool c = t >= crop.start && t <= crop.end;
    both += mask[t] && c;
    either += mask[t] || c;
  }
  return either == 0 ? 1.0 : double(both) / double(either);
}

double window_recall(const std::vector<bool>& mask, data::FrameRange window) {
  if (window.start > window.end || window.end >= mask.size()) throw ValueError("recall: window outside the mask");
  std::size_t hit = 0;
  for (std::size_t t = window.start; t <= window.end; ++t) hit += mask[t];
  return double(hit) / double(window.end - window.start + 1);
}

}  // namespace vidsal::crop
