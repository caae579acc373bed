#include "vidsal/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <random>

namespace vidsal::data {
namespace {

constexpr std::array<std::string_view, kNumClasses> kNames{"move_left", "move_right", "move_up", "move_down",
                                                           "approach",  "retreat",    "collide", "pass_each_other"};

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  std::size_t integer(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }
  bool coin() { return integer(0, 1) == 1; }

  Sprite sprite() {
    Sprite s;
    s.shape = coin() ? SpriteShape::Disc : SpriteShape::Square;
    s.size = uniform(4.0, 7.0);
    s.intensity = uniform(0.8, 1.0);
    return s;
  }

 private:
  std::mt19937_64 rng_;
};

Point lerp(const Point& a, const Point& b, double w) { return {a.x + (b.x - a.x) * w, a.y + (b.y - a.y) * w}; }

Point position_at(const Sprite& sprite, std::size_t frame) {
  const auto& path = sprite.path;
  if (frame <= path.front().frame) return path.front().center;
  for (std::size_t i = 1; i < path.size(); ++i) {
    if (frame <= path[i].frame) {
      const double w = double(frame - path[i - 1].frame) / double(path[i].frame - path[i - 1].frame);
      return lerp(path[i - 1].center, path[i].center, w);
    }
  }
  return path.back().center;
}

// Centers of two sprites on a horizontal line with a given edge-to-edge gap.
std::pair<Point, Point> pair_with_gap(double cx, double y_left, double y_right, double size_left, double size_right,
                                      double gap) {
  return {Point{cx - gap / 2 - size_left / 2, y_left}, Point{cx + gap / 2 + size_right / 2, y_right}};
}

void validate(const ClipSpec& spec) {
  if (spec.raw_length < 1 || spec.frame_size < 1) throw ValueError("clip spec: empty clip");
  if (spec.sprites.empty()) throw ValueError("clip spec: no sprites");
  for (const auto& sprite : spec.sprites) {
    if (sprite.size <= 0 || sprite.size > double(spec.frame_size)) {
      throw ValueError("clip spec: sprite of size " + std::to_string(sprite.size) + " does not fit a " +
                       std::to_string(spec.frame_size) + "px frame");
    }
    if (sprite.path.empty() || sprite.path.front().frame != 0 || sprite.path.back().frame + 1 != spec.raw_length) {
      throw ValueError("clip spec: sprite path must span frames 0.." + std::to_string(spec.raw_length - 1));
    }
    for (std::size_t i = 1; i < sprite.path.size(); ++i) {
      if (sprite.path[i].frame <= sprite.path[i - 1].frame) throw ValueError("clip spec: keyframes not increasing");
    }
    // Paths are piecewise linear, so checking keyframes bounds every frame.
    const double half = sprite.size / 2;
    for (const auto& k : sprite.path) {
      if (k.center.x - half < -1e-9 || k.center.y - half < -1e-9 || k.center.x + half > spec.frame_size + 1e-9 ||
          k.center.y + half > spec.frame_size + 1e-9) {
        throw ValueError("clip spec: trajectory leaves the frame at raw frame " + std::to_string(k.frame));
      }
    }
  }
  if (spec.raw_event && (spec.raw_event->start > spec.raw_event->end || spec.raw_event->end >= spec.raw_length)) {
    throw ValueError("clip spec: event range outside the clip");
  }
}

double coverage(const Sprite& sprite, const Point& c, double px, double py) {
  constexpr int kSub = 4;
  const double half = sprite.size / 2;
  int inside = 0;
  for (int sy = 0; sy < kSub; ++sy)
    for (int sx = 0; sx < kSub; ++sx) {
      const double x = px + (sx + 0.5) / kSub - c.x;
      const double y = py + (sy + 0.5) / kSub - c.y;
      const bool hit = sprite.shape == SpriteShape::Square ? (std::abs(x) <= half && std::abs(y) <= half)
                                                           : (x * x + y * y <= half * half);
      inside += hit ? 1 : 0;
    }
  return double(inside) / (kSub * kSub);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a simple combination.
  std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (a + 1) + 0xbf58476d1ce4e5b9ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::string_view class_name(MotionClass c) { return kNames[static_cast<std::size_t>(c)]; }

MotionClass parse_class(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return static_cast<MotionClass>(i);
  }
  throw ValueError("unknown class '" + std::string(name) + "'");
}

std::optional<MotionClass> mirror_class(MotionClass c) {
  switch (c) {
    case MotionClass::MoveLeft: return MotionClass::MoveRight;
    case MotionClass::MoveRight: return MotionClass::MoveLeft;
    case MotionClass::MoveUp: return MotionClass::MoveDown;
    case MotionClass::MoveDown: return MotionClass::MoveUp;
    case MotionClass::Approach: return MotionClass::Retreat;
    case MotionClass::Retreat: return MotionClass::Approach;
    default: return std::nullopt;
  }
}

bool is_direction_paired(MotionClass c) { return mirror_class(c).has_value(); }

bool has_event(MotionClass c) { return c == MotionClass::Collide || c == MotionClass::PassEachOther; }

ClipSpec mirror(const ClipSpec& spec) {
  ClipSpec out = spec;
  out.label = mirror_class(spec.label).value_or(spec.label);
  out.time_reversed = !spec.time_reversed;
  return out;
}

ClipSpec random_clip_spec(MotionClass label, std::uint64_t seed, std::size_t frame_size, std::size_t target_length,
                          double noise) {
  Sampler rng(seed);
  ClipSpec spec;
  spec.label = label;
  spec.frame_size = frame_size;
  spec.target_length = target_length;
  spec.noise = noise;
  spec.seed = seed;
  constexpr std::array<std::size_t, 3> kRawLengths{32, 48, 64};
  spec.raw_length = std::max(kRawLengths[rng.integer(0, 2)], target_length);
  const std::size_t last = spec.raw_length - 1;
  const double S = double(frame_size);

  switch (label) {
    case MotionClass::MoveLeft:
    case MotionClass::MoveRight:
    case MotionClass::MoveUp:
    case MotionClass::MoveDown: {
      Sprite s = rng.sprite();
      const double half = s.size / 2;
      const double travel = rng.uniform(14.0, 20.0);
      const double across = rng.uniform(half + 1, S - half - 1);
      const double from = rng.uniform(half + 1, S - half - 1 - travel);
      const double to = from + travel;
      const bool forward = label == MotionClass::MoveRight || label == MotionClass::MoveDown;
      const bool horizontal = label == MotionClass::MoveLeft || label == MotionClass::MoveRight;
      const double a = forward ? from : to, b = forward ? to : from;
      const Point p0 = horizontal ? Point{a, across} : Point{across, a};
      const Point p1 = horizontal ? Point{b, across} : Point{across, b};
      s.path = {{0, p0}, {last, p1}};
      spec.sprites = {s};
      break;
    }
    case MotionClass::Approach:
    case MotionClass::Retreat: {
      Sprite l = rng.sprite(), r = rng.sprite();
      const double y = rng.uniform(10.0, S - 10.0);
      const double dy = rng.uniform(-6.0, 6.0);
      const double cx = rng.uniform(S / 2 - 2, S / 2 + 2);
      const double room = 2 * (std::min(cx, S - cx) - std::max(l.size, r.size) - 0.5);
      const double far = rng.uniform(0.75 * room, room), near = rng.uniform(3.0, 6.0);
      const bool approach = label == MotionClass::Approach;
      auto [l0, r0] = pair_with_gap(cx, y, y + dy, l.size, r.size, approach ? far : near);
      auto [l1, r1] = pair_with_gap(cx, y, y + dy, l.size, r.size, approach ? near : far);
      l.path = {{0, l0}, {last, l1}};
      r.path = {{0, r0}, {last, r1}};
      spec.sprites = {l, r};
      break;
    }
    case MotionClass::Collide: {
      Sprite l = rng.sprite(), r = rng.sprite();
      r.size = l.size;
      const double y = rng.uniform(l.size / 2 + 1, S - l.size / 2 - 1);
      const double cx = rng.uniform(S / 2 - 2, S / 2 + 2);
      const std::size_t hold = spec.raw_length / target_length;
      const std::size_t contact = rng.integer(spec.raw_length / 3, 2 * spec.raw_length / 3);
      const std::size_t c0 = contact - hold, c1 = contact + hold;
      // Gap 2 px right before/after contact, 1 px overlap during contact,
      // so the objects touch in exactly the contact frames.
      const double room = 2 * (std::min(cx, S - cx) - l.size - 0.5);
      const double g_start = rng.uniform(0.7 * room, room), g_end = rng.uniform(0.6 * room, room);
      const std::array<std::pair<std::size_t, double>, 6> keys{
          {{0, g_start}, {c0 - 1, 2.0}, {c0, -1.0}, {c1, -1.0}, {c1 + 1, 2.0}, {last, g_end}}};
      for (const auto& [frame, gap] : keys) {
        auto [pl, pr] = pair_with_gap(cx, y, y, l.size, r.size, gap);
        l.path.push_back({frame, pl});
        r.path.push_back({frame, pr});
      }
      spec.sprites = {l, r};
      spec.raw_event = FrameRange{c0, c1};
      break;
    }
    case MotionClass::PassEachOther: {
      Sprite a = rng.sprite(), b = rng.sprite();
      const double max_size = std::max(a.size, b.size);
      const double sep = rng.uniform(max_size + 2, max_size + 5);
      const double ya = rng.uniform(max_size / 2 + 1, S - max_size / 2 - 1 - sep);
      const double yb = ya + sep;
      const double cx = rng.uniform(S / 2 - 3, S / 2 + 3);
      const double phase = rng.uniform(0.35, 0.65);
      const double reach = (std::min(cx, S - cx) - max_size / 2 - 0.5) / std::max(phase, 1 - phase);
      const double travel = rng.uniform(0.8 * reach, reach);
      const bool a_rightward = rng.coin();
      const double dir = a_rightward ? 1.0 : -1.0;
      a.path = {{0, {cx - dir * travel * phase, ya}}, {last, {cx + dir * travel * (1 - phase), ya}}};
      b.path = {{0, {cx + dir * travel * phase, yb}}, {last, {cx - dir * travel * (1 - phase), yb}}};
      spec.sprites = {a, b};
      // Crossing = frames whose horizontal extents overlap.
      std::optional<FrameRange> crossing;
      for (std::size_t k = 0; k <= last; ++k) {
        const double dx = std::abs(position_at(a, k).x - position_at(b, k).x);
        if (dx < (a.size + b.size) / 2) {
          if (!crossing) crossing = FrameRange{k, k};
          crossing->end = k;
        }
      }
      spec.raw_event = crossing;
      break;
    }
  }
  validate(spec);
  return spec;
}

std::vector<Point> sprite_centers(const ClipSpec& spec, std::size_t frame) {
  const std::size_t canonical = spec.time_reversed ? spec.raw_length - 1 - frame : frame;
  std::vector<Point> out;
  for (const auto& s : spec.sprites) out.push_back(position_at(s, canonical));
  return out;
}

GeneratedClip generate_clip(const ClipSpec& spec) {
  validate(spec);
  const std::size_t L = spec.raw_length, S = spec.frame_size;
  GeneratedClip result;
  result.frames = VideoTensor(Shape{L, S, S, 1});
  auto data = result.frames.data();
  for (std::size_t k = 0; k < L; ++k) {
    const std::size_t canonical = spec.time_reversed ? L - 1 - k : k;
    std::mt19937_64 noise_rng(derive_seed(spec.seed, canonical, 0xB0B));
    std::uniform_real_distribution<double> noise(0.0, spec.noise);
    float* frame = data.data() + k * S * S;
    for (std::size_t i = 0; i < S * S; ++i) frame[i] = static_cast<float>(noise(noise_rng));
    for (const auto& sprite : spec.sprites) {
      const Point c = position_at(sprite, canonical);
      const double half = sprite.size / 2;
      const std::size_t x0 = std::size_t(std::max(0.0, std::floor(c.x - half)));
      const std::size_t y0 = std::size_t(std::max(0.0, std::floor(c.y - half)));
      const std::size_t x1 = std::min<std::size_t>(S - 1, std::size_t(std::max(0.0, std::floor(c.x + half))));
      const std::size_t y1 = std::min<std::size_t>(S - 1, std::size_t(std::max(0.0, std::floor(c.y + half))));
      for (std::size_t y = y0; y <= y1; ++y)
        for (std::size_t x = x0; x <= x1; ++x) {
          const double cov = coverage(sprite, c, double(x), double(y));
          if (cov <= 0) continue;
          float& px = frame[y * S + x];
          px = static_cast<float>(px * (1 - cov) + sprite.intensity * cov);
        }
    }
  }
  if (spec.raw_event) {
    FrameRange ev = *spec.raw_event;
    if (spec.time_reversed) ev = FrameRange{L - 1 - ev.end, L - 1 - ev.start};
    result.raw_event = ev;
    result.event = subsample_window(ev, L, spec.target_length);
  }
  return result;
}

std::vector<std::size_t> subsample_indices(std::size_t raw_length, std::size_t target) {
  if (target < 1 || raw_length < target) {
    throw ValueError("subsample: cannot select " + std::to_string(target) + " frames from " +
                     std::to_string(raw_length));
  }
  std::vector<std::size_t> idx(target);
  for (std::size_t i = 0; i < target; ++i) idx[i] = i * raw_length / target;
  return idx;
}

VideoTensor subsample(const VideoTensor& clip, std::size_t target) {
  if (clip.rank() != 4) throw ShapeError("subsample: expected [T,H,W,C], got " + shape_string(clip.shape()));
  const auto idx = subsample_indices(clip.extent(0), target);
  const std::size_t frame = clip.size() / clip.extent(0);
  Shape shape = clip.shape();
  shape[0] = target;
  VideoTensor out(shape);
  for (std::size_t i = 0; i < target; ++i) {
    std::copy_n(clip.data().begin() + idx[i] * frame, frame, out.data().begin() + i * frame);
  }
  return out;
}

std::optional<EventWindow> subsample_window(const FrameRange& raw, std::size_t raw_length, std::size_t target) {
  const auto idx = subsample_indices(raw_length, target);
  std::optional<EventWindow> window;
  for (std::size_t i = 0; i < target; ++i) {
    if (idx[i] < raw.start || idx[i] > raw.end) continue;
    if (!window) window = EventWindow{i, i};
    window->end = i;
  }
  return window;
}

VideoTensor reverse_frames(const VideoTensor& clip) {
  const std::size_t T = clip.extent(0);
  const std::size_t frame = clip.size() / T;
  VideoTensor out(clip.shape());
  for (std::size_t t = 0; t < T; ++t) {
    std::copy_n(clip.data().begin() + (T - 1 - t) * frame, frame, out.data().begin() + t * frame);
  }
  return out;
}

DatasetSplit make_dataset(const DatasetOptions& options) {
  if (options.classes.size() < 2) throw ValueError("dataset: need at least 2 classes");
  if (options.clips_per_class < 2) throw ValueError("dataset: need at least 2 clips per class");
  if (!(options.train_fraction > 0 && options.train_fraction < 1)) {
    throw ValueError("dataset: train fraction must lie in (0, 1)");
  }
  const std::size_t n = options.clips_per_class;
  const std::size_t n_train =
      std::clamp<std::size_t>(std::size_t(std::llround(options.train_fraction * double(n))), 1, n - 1);
  DatasetSplit split;
  for (std::size_t ci = 0; ci < options.classes.size(); ++ci) {
    const MotionClass label = options.classes[ci];
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), std::mt19937_64(derive_seed(options.seed, ci, 0x5917)));
    std::vector<bool> in_train(n, false);
    for (std::size_t i = 0; i < n_train; ++i) in_train[order[i]] = true;
    for (std::size_t i = 0; i < n; ++i) {
      ClipRecord rec;
      rec.label = label;
      rec.label_index = ci;
      rec.seed = derive_seed(options.seed, static_cast<std::uint64_t>(label), i);
      char id[64];
      std::snprintf(id, sizeof id, "%s_%03zu", std::string(class_name(label)).c_str(), i);
      rec.id = id;
      const ClipSpec spec =
          random_clip_spec(label, rec.seed, options.frame_size, options.target_length, options.noise);
      GeneratedClip clip = generate_clip(spec);
      rec.raw_length = spec.raw_length;
      rec.event = clip.event;
      rec.frames = subsample(clip.frames, options.target_length);
      (in_train[i] ? split.train : split.val).push_back(std::move(rec));
    }
  }
  return split;
}

}  // namespace vidsal::data
