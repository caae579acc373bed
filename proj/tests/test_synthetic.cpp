#include <algorithm>
#include <set>

#include "doctest.h"
#include "vidsal/synthetic.hpp"

using namespace vidsal;
using namespace vidsal::data;

namespace {

// BFS count of 8-connected components of pixels above `threshold` in one frame.
std::size_t components(const VideoTensor& clip, std::size_t frame, float threshold) {
  const std::size_t H = clip.extent(1), W = clip.extent(2);
  std::vector<int> seen(H * W, 0);
  std::size_t count = 0;
  for (std::size_t start = 0; start < H * W; ++start) {
    if (seen[start] || clip[frame * H * W + start] <= threshold) continue;
    ++count;
    std::vector<std::size_t> stack{start};
    seen[start] = 1;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const long y = long(p / W), x = long(p % W);
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          const long ny = y + dy, nx = x + dx;
          if (ny < 0 || nx < 0 || ny >= long(H) || nx >= long(W)) continue;
          const std::size_t q = std::size_t(ny) * W + std::size_t(nx);
          if (seen[q] || clip[frame * H * W + q] <= threshold) continue;
          seen[q] = 1;
          stack.push_back(q);
        }
    }
  }
  return count;
}

}  // namespace

TEST_CASE("class names round-trip and unknown names are rejected") {
  for (auto c : kAllClasses) CHECK(parse_class(class_name(c)) == c);
  CHECK(class_name(MotionClass::PassEachOther) == "pass_each_other");
  CHECK_THROWS_AS(parse_class("jump"), ValueError);
}

TEST_CASE("mirror pairs") {
  CHECK(mirror_class(MotionClass::MoveLeft) == MotionClass::MoveRight);
  CHECK(mirror_class(MotionClass::MoveDown) == MotionClass::MoveUp);
  CHECK(mirror_class(MotionClass::Retreat) == MotionClass::Approach);
  CHECK_FALSE(mirror_class(MotionClass::Collide).has_value());
  CHECK(has_event(MotionClass::Collide));
  CHECK(has_event(MotionClass::PassEachOther));
  CHECK_FALSE(has_event(MotionClass::MoveUp));
}

TEST_CASE("subsample indices and event window") {
  CHECK(subsample_indices(64, 16) == std::vector<std::size_t>{0, 4, 8, 12, 16, 20, 24, 28, 32, 36, 40, 44, 48, 52, 56, 60});
  CHECK(subsample_indices(48, 16)[15] == 45);
  CHECK(subsample_indices(16, 16)[15] == 15);
  CHECK_THROWS_AS(subsample_indices(8, 16), ValueError);

  // contact at raw frame 40 of 64, held for 64 / 16 frames either side
  const auto w = subsample_window(FrameRange{36, 44}, 64, 16);
  REQUIRE(w.has_value());
  CHECK(*w == FrameRange{9, 11});
  CHECK_FALSE(subsample_window(FrameRange{1, 3}, 64, 16).has_value());
}

TEST_CASE("mirrored spec renders the frame-reversed clip exactly") {
  for (auto c : kAllClasses) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const ClipSpec spec = random_clip_spec(c, seed);
      const GeneratedClip a = generate_clip(spec);
      const ClipSpec m = mirror(spec);
      const GeneratedClip b = generate_clip(m);
      CHECK(b.frames == reverse_frames(a.frames));
      CHECK(m.label == mirror_class(c).value_or(c));
      if (a.raw_event) {
        REQUIRE(b.raw_event.has_value());
        CHECK(b.raw_event->start == spec.raw_length - 1 - a.raw_event->end);
        CHECK(b.raw_event->end == spec.raw_length - 1 - a.raw_event->start);
      }
    }
  }
}

TEST_CASE("generation is deterministic in the seed") {
  const auto a = generate_clip(random_clip_spec(MotionClass::Approach, 11));
  const auto b = generate_clip(random_clip_spec(MotionClass::Approach, 11));
  const auto c = generate_clip(random_clip_spec(MotionClass::Approach, 12));
  CHECK(a.frames == b.frames);
  CHECK_FALSE(a.frames == c.frames);
}

TEST_CASE("pixel values stay in [0, 1] and sprites are brighter than noise") {
  for (auto c : kAllClasses) {
    const auto clip = generate_clip(random_clip_spec(c, 5));
    const auto [lo, hi] = std::minmax_element(clip.frames.data().begin(), clip.frames.data().end());
    CHECK(*lo >= 0.0f);
    CHECK(*hi <= 1.0f);
    CHECK(*hi >= 0.8f);
  }
}

TEST_CASE("movement classes travel along one axis in the labelled direction") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto check = [&](MotionClass c, double dx_sign, double dy_sign) {
      const ClipSpec spec = random_clip_spec(c, seed);
      const Point p0 = sprite_centers(spec, 0)[0];
      const Point p1 = sprite_centers(spec, spec.raw_length - 1)[0];
      const double dx = p1.x - p0.x, dy = p1.y - p0.y;
      CHECK(dx * dx_sign >= (dx_sign != 0 ? 12.0 : 0.0));
      CHECK(dy * dy_sign >= (dy_sign != 0 ? 12.0 : 0.0));
      if (dx_sign == 0) CHECK(dx == 0);
      if (dy_sign == 0) CHECK(dy == 0);
    };
    check(MotionClass::MoveRight, 1, 0);
    check(MotionClass::MoveLeft, -1, 0);
    check(MotionClass::MoveDown, 0, 1);
    check(MotionClass::MoveUp, 0, -1);
  }
}

TEST_CASE("approach closes the gap and retreat opens it") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (auto c : {MotionClass::Approach, MotionClass::Retreat}) {
      const ClipSpec spec = random_clip_spec(c, seed);
      auto gap = [&](std::size_t f) {
        const auto p = sprite_centers(spec, f);
        return std::abs(p[1].x - p[0].x);
      };
      if (c == MotionClass::Approach) CHECK(gap(spec.raw_length - 1) < gap(0));
      else CHECK(gap(spec.raw_length - 1) > gap(0));
    }
  }
}

TEST_CASE("collide: objects touch exactly during the planted window") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ClipSpec spec = random_clip_spec(MotionClass::Collide, seed);
    const GeneratedClip clip = generate_clip(spec);
    REQUIRE(clip.raw_event.has_value());
    REQUIRE(clip.event.has_value());
    const std::size_t c = (clip.raw_event->start + clip.raw_event->end) / 2;
    CHECK(c >= spec.raw_length / 3);
    CHECK(c <= 2 * spec.raw_length / 3);
    for (std::size_t f = 0; f < spec.raw_length; ++f) {
      const bool in_window = f >= clip.raw_event->start && f <= clip.raw_event->end;
      CHECK_MESSAGE(components(clip.frames, f, 0.45f) == (in_window ? 1u : 2u), "seed " << seed << " frame " << f);
    }
  }
}

TEST_CASE("pass_each_other: crossing window is in the clip and objects never touch") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ClipSpec spec = random_clip_spec(MotionClass::PassEachOther, seed);
    const GeneratedClip clip = generate_clip(spec);
    REQUIRE(clip.event.has_value());
    CHECK(clip.event->start <= clip.event->end);
    CHECK(clip.event->end < spec.target_length);
    for (std::size_t f = 0; f < spec.raw_length; ++f) CHECK(components(clip.frames, f, 0.45f) == 2u);
  }
}

TEST_CASE("time reversal keeps the event window inside the subsampled clip") {
  const ClipSpec spec = mirror(random_clip_spec(MotionClass::Collide, 3));
  const GeneratedClip clip = generate_clip(spec);
  REQUIRE(clip.event.has_value());
  CHECK(clip.event->end < 16);
}

TEST_CASE("invalid specs are rejected") {
  ClipSpec spec = random_clip_spec(MotionClass::MoveRight, 1);
  spec.sprites[0].size = 40;
  CHECK_THROWS_AS(generate_clip(spec), ValueError);

  spec = random_clip_spec(MotionClass::MoveRight, 1);
  spec.sprites[0].path.back().center.x = 100;
  CHECK_THROWS_AS(generate_clip(spec), ValueError);

  spec = random_clip_spec(MotionClass::MoveRight, 1);
  spec.sprites[0].path.back().frame = spec.raw_length + 3;
  CHECK_THROWS_AS(generate_clip(spec), ValueError);
}

TEST_CASE("dataset split is stratified and reproducible") {
  DatasetOptions opt;
  opt.clips_per_class = 10;
  const DatasetSplit a = make_dataset(opt);
  CHECK(a.train.size() == 64);
  CHECK(a.val.size() == 16);
  for (std::size_t ci = 0; ci < kNumClasses; ++ci) {
    const auto n = std::count_if(a.train.begin(), a.train.end(), [&](const ClipRecord& r) { return r.label_index == ci; });
    CHECK(n == 8);
  }
  std::set<std::string> ids;
  for (const auto* part : {&a.train, &a.val})
    for (const auto& r : *part) {
      ids.insert(r.id);
      CHECK(r.frames.shape() == Shape{16, 32, 32, 1});
      CHECK(has_event(r.label) == r.event.has_value());
    }
  CHECK(ids.size() == 80);
  CHECK(ids.count("pass_each_other_009") == 1);

  const DatasetSplit b = make_dataset(opt);
  REQUIRE(b.train.size() == a.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].id == b.train[i].id);
    CHECK(a.train[i].frames == b.train[i].frames);
  }
}

TEST_CASE("default dataset is 320 train / 80 val, 40 / 10 per class") {
  const DatasetSplit s = make_dataset(DatasetOptions{});
  CHECK(s.train.size() == 320);
  CHECK(s.val.size() == 80);
  for (std::size_t ci = 0; ci < kNumClasses; ++ci) {
    auto in = [&](const std::vector<ClipRecord>& v) {
      return std::count_if(v.begin(), v.end(), [&](const ClipRecord& r) { return r.label_index == ci; });
    };
    CHECK(in(s.train) == 40);
    CHECK(in(s.val) == 10);
  }
}

TEST_CASE("degenerate dataset options are rejected") {
  DatasetOptions opt;
  opt.clips_per_class = 1;
  CHECK_THROWS_AS(make_dataset(opt), ValueError);
  opt.clips_per_class = 10;
  opt.train_fraction = 1.0;
  CHECK_THROWS_AS(make_dataset(opt), ValueError);
  opt.train_fraction = 0.8;
  opt.classes = {MotionClass::Collide};
  CHECK_THROWS_AS(make_dataset(opt), ValueError);
}

TEST_CASE("sampled specs always fit the frame") {
  for (auto c : kAllClasses)
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
      const ClipSpec spec = random_clip_spec(c, derive_seed(99, seed));
      CHECK_NOTHROW(generate_clip(spec));
      if (has_event(c)) CHECK(generate_clip(spec).event.has_value());
    }
}
