#include "vidsal/gradcam.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "vidsal/image.hpp"

namespace vidsal::gradcam {

template <class Real>
Tensor<double> cam_maps(const Tensor<Real>& A, const Tensor<Real>& dA) {
  if (A.rank() != 4 || A.shape() != dA.shape()) {
    throw ShapeError("gradcam: activations " + shape_string(A.shape()) + " and gradients " + shape_string(dA.shape()) +
                     " must both be [T, H, W, K]");
  }
  const std::size_t T = A.extent(0), H = A.extent(1), W = A.extent(2), K = A.extent(3), HW = H * W;
  Tensor<double> out(Shape{T, H, W});
  std::vector<double> w(K);
  for (std::size_t t = 0; t < T; ++t) {
    std::fill(w.begin(), w.end(), 0.0);
    const std::size_t base = t * HW * K;
    for (std::size_t p = 0; p < HW; ++p)
      for (std::size_t k = 0; k < K; ++k) w[k] += double(dA[base + p * K + k]);
    for (auto& v : w) v /= double(HW);
    for (std::size_t p = 0; p < HW; ++p) {
      double s = 0;
      for (std::size_t k = 0; k < K; ++k) s += w[k] * double(A[base + p * K + k]);
      out[t * HW + p] = std::max(0.0, s);
    }
  }
  return out;
}

template <class Real>
SaliencyVolume compute(const models::VideoModel<Real>& model, const Tensor<Real>& clip, std::size_t target) {
  if (target >= model.num_classes()) {
    throw ValueError("gradcam: class " + std::to_string(target) + " out of range for " +
                     std::to_string(model.num_classes()) + " classes");
  }
  ad::Tape<Real> tape;
  // A leaf that wants gradients so every activation downstream records one.
  const auto x = tape.leaf(clip, true);
  const auto out = model.forward(tape, std::span<const ad::Var<Real>>(&x, 1), models::Mode::Eval);
  const auto grads = ad::backward(tape, ad::select(out.logits[0], target));

  Tensor<Real> A, dA;
  if (!out.activation_steps.empty()) {
    const auto& steps = out.activation_steps[0];
    const Shape step_shape = steps.front().shape();
    Shape shape = step_shape;
    shape[0] = steps.size();
    A = Tensor<Real>(shape);
    dA = Tensor<Real>(shape);
    const std::size_t n = shape_size(step_shape);
    for (std::size_t t = 0; t < steps.size(); ++t) {
      std::copy_n(steps[t].value().data().begin(), n, A.data().begin() + t * n);
      if (const auto* g = grads.find(steps[t])) std::copy_n(g->data().begin(), n, dA.data().begin() + t * n);
    }
  } else {
    const auto& act = out.activations[0];
    A = act.value();
    const auto* g = grads.find(act);
    dA = g ? *g : Tensor<Real>(A.shape());
  }

  SaliencyVolume v;
  v.maps = cam_maps(A, dA);
  v.target_class = target;
  v.frames_of_step.resize(v.steps());
  const auto map = model.step_of_frame();
  for (std::size_t f = 0; f < map.size(); ++f) v.frames_of_step.at(map[f]).push_back(f);
  return v;
}

SaliencyVolume upsample(const SaliencyVolume& volume, std::size_t height, std::size_t width) {
  const std::size_t T = volume.steps(), h = volume.height(), w = volume.width();
  if (height < h || width < w) {
    throw ValueError("upsample: target " + std::to_string(height) + "x" + std::to_string(width) +
                     " is smaller than the source " + std::to_string(h) + "x" + std::to_string(w));
  }
  auto coords = [](std::size_t out, std::size_t in) {
    // source position of every output pixel: lower index and weight of the upper one
    std::vector<std::pair<std::size_t, double>> c(out);
    const double scale = double(in) / double(out);
    for (std::size_t o = 0; o < out; ++o) {
      const double s = std::clamp((double(o) + 0.5) * scale - 0.5, 0.0, double(in - 1));
      const std::size_t lo = std::min(std::size_t(s), in - 1);
      c[o] = {lo, s - double(lo)};
    }
    return c;
  };
  const auto cy = coords(height, h), cx = coords(width, w);
  SaliencyVolume out;
  out.maps = Tensor<double>(Shape{T, height, width});
  out.frames_of_step = volume.frames_of_step;
  out.target_class = volume.target_class;
  for (std::size_t t = 0; t < T; ++t) {
    const double* src = volume.maps.data().data() + t * h * w;
    double* dst = out.maps.data().data() + t * height * width;
    for (std::size_t y = 0; y < height; ++y) {
      const auto [y0, fy] = cy[y];
      const std::size_t y1 = std::min(y0 + 1, h - 1);
      for (std::size_t x = 0; x < width; ++x) {
        const auto [x0, fx] = cx[x];
        const std::size_t x1 = std::min(x0 + 1, w - 1);
        const double top = src[y0 * w + x0] * (1 - fx) + src[y0 * w + x1] * fx;
        const double bottom = src[y1 * w + x0] * (1 - fx) + src[y1 * w + x1] * fx;
        dst[y * width + x] = top * (1 - fy) + bottom * fy;
      }
    }
  }
  return out;
}

Tensor<double> per_frame(const SaliencyVolume& volume, std::size_t frames) {
  const std::size_t HW = volume.height() * volume.width();
  Tensor<double> out(Shape{frames, volume.height(), volume.width()});
  std::vector<int> covered(frames, 0);
  for (std::size_t s = 0; s < volume.frames_of_step.size(); ++s)
    for (std::size_t f : volume.frames_of_step[s]) {
      if (f >= frames) throw ValueError("gradcam: step " + std::to_string(s) + " maps to frame " + std::to_string(f));
      std::copy_n(volume.maps.data().begin() + s * HW, HW, out.data().begin() + f * HW);
      ++covered[f];
    }
  for (std::size_t f = 0; f < frames; ++f) {
    if (covered[f] != 1) throw ValueError("gradcam: frame " + std::to_string(f) + " is not covered by exactly one map");
  }
  return out;
}

template <class Real>
Tensor<double> saliency_frames(const models::VideoModel<Real>& model, const Tensor<Real>& clip, std::size_t target) {
  const auto& cfg = model.config();
  return per_frame(upsample(compute(model, clip, target), cfg.height, cfg.width), cfg.frames);
}

std::vector<std::string> write_images(const std::filesystem::path& dir, const TensorF& clip,
                                      const Tensor<double>& frames) {
  const std::size_t T = frames.extent(0), H = frames.extent(1), W = frames.extent(2), HW = H * W;
  if (clip.rank() != 4 || clip.extent(0) != T || clip.extent(1) != H || clip.extent(2) != W) {
    throw ShapeError("gradcam images: clip " + shape_string(clip.shape()) + " vs saliency " +
                     shape_string(frames.shape()));
  }
  const double peak = *std::max_element(frames.data().begin(), frames.data().end());
  const double scale = peak > 0 ? peak : 1.0;
  std::filesystem::create_directories(dir);
  std::vector<std::string> files;
  const std::size_t C = clip.extent(3);
  for (std::size_t t = 0; t < T; ++t) {
    const std::span<const double> map(frames.data().data() + t * HW, HW);
    std::vector<double> gray(HW), norm(HW);
    for (std::size_t p = 0; p < HW; ++p) {
      double s = 0;
      for (std::size_t c = 0; c < C; ++c) s += double(clip[(t * HW + p) * C + c]);
      gray[p] = s / double(C);
      norm[p] = map[p] / scale;
    }
    char name[64];
    std::snprintf(name, sizeof name, "saliency_t%02zu.pgm", t);
    image::write_pgm(dir / name, image::gray_from(map, H, W, scale));
    files.emplace_back(name);
    std::snprintf(name, sizeof name, "overlay_t%02zu.png", t);
    image::write_png(dir / name, image::overlay(gray, norm, H, W));
    files.emplace_back(name);
  }
  return files;
}

template Tensor<double> cam_maps(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> cam_maps(const Tensor<double>&, const Tensor<double>&);
template SaliencyVolume compute(const models::VideoModel<float>&, const Tensor<float>&, std::size_t);
template SaliencyVolume compute(const models::VideoModel<double>&, const Tensor<double>&, std::size_t);
template Tensor<double> saliency_frames(const models::VideoModel<float>&, const Tensor<float>&, std::size_t);
template Tensor<double> saliency_frames(const models::VideoModel<double>&, const Tensor<double>&, std::size_t);

}  // namespace vidsal::gradcam
