#pragma once

// Procedural motion-defined video clips. Classes differ only in how sprites
// move, never in how they look, so a classifier has to use temporal order.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vidsal/tensor.hpp"

namespace vidsal::data {

// [T, H, W, C] clip, values in [0, 1].
using VideoTensor = TensorF;

enum class MotionClass : std::uint8_t {
  MoveLeft,
  MoveRight,
  MoveUp,
  MoveDown,
  Approach,
  Retreat,
  Collide,
  PassEachOther,
};

inline constexpr std::size_t kNumClasses = 8;
inline constexpr std::array<MotionClass, kNumClasses> kAllClasses{
    MotionClass::MoveLeft, MotionClass::MoveRight, MotionClass::MoveUp,  MotionClass::MoveDown,
    MotionClass::Approach, MotionClass::Retreat,   MotionClass::Collide, MotionClass::PassEachOther};

std::string_view class_name(MotionClass c);
MotionClass parse_class(std::string_view name);  // throws ValueError

// Temporal mirror partner (left/right, up/down, approach/retreat).
std::optional<MotionClass> mirror_class(MotionClass c);
bool is_direction_paired(MotionClass c);
bool has_event(MotionClass c);

enum class SpriteShape : std::uint8_t { Square, Disc };

struct Point {
  double x = 0;
  double y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

struct Keyframe {
  std::size_t frame = 0;  // raw frame index
  Point center;
};

struct Sprite {
  SpriteShape shape = SpriteShape::Square;
  double size = 5;  // side length or diameter, pixels
  double intensity = 0.9;
  std::vector<Keyframe> path;  // strictly increasing frames, first = 0, last = raw_length - 1
};

// Inclusive frame range.
struct FrameRange {
  std::size_t start = 0;
  std::size_t end = 0;
  friend bool operator==(const FrameRange&, const FrameRange&) = default;
};

// Planted discriminative event, in subsampled-clip coordinates.
using EventWindow = FrameRange;

struct ClipSpec {
  MotionClass label = MotionClass::MoveRight;
  std::size_t raw_length = 32;
  std::size_t frame_size = 32;
  std::size_t target_length = 16;
  std::vector<Sprite> sprites;
  // Raw frames of the contact (collide) or crossing (pass_each_other).
  std::optional<FrameRange> raw_event;
  double noise = 0.05;
  std::uint64_t seed = 0;
  // Frame k is rendered at canonical time raw_length - 1 - k (paths and noise).
  bool time_reversed = false;
};

// The same clip played backwards, labelled with the mirror class when there
// is one. Rendering mirror(spec) equals the frame-reversed render of spec.
ClipSpec mirror(const ClipSpec& spec);

// Samples sprites, trajectories and raw length (one of 32, 48, 64) for a
// class from the seed.
ClipSpec random_clip_spec(MotionClass label, std::uint64_t seed, std::size_t frame_size = 32,
                          std::size_t target_length = 16, double noise = 0.05);

struct GeneratedClip {
  VideoTensor frames;                 // [raw_length, H, W, 1]
  std::optional<FrameRange> raw_event;  // in raw frames, after time reversal
  std::optional<EventWindow> event;     // in subsampled frames
};

GeneratedClip generate_clip(const ClipSpec& spec);

// Sprite positions for one raw frame (after time reversal is applied).
std::vector<Point> sprite_centers(const ClipSpec& spec, std::size_t frame);

// Evenly spaced frame selection starting at frame 0: floor(i * raw / target).
std::vector<std::size_t> subsample_indices(std::size_t raw_length, std::size_t target);
VideoTensor subsample(const VideoTensor& clip, std::size_t target);
std::optional<EventWindow> subsample_window(const FrameRange& raw, std::size_t raw_length, std::size_t target);

VideoTensor reverse_frames(const VideoTensor& clip);

struct ClipRecord {
  std::string id;
  MotionClass label = MotionClass::MoveLeft;
  std::size_t label_index = 0;  // position in the dataset's class list
  std::uint64_t seed = 0;
  std::size_t raw_length = 0;
  std::optional<EventWindow> event;
  VideoTensor frames;  // subsampled
};

struct DatasetSplit {
  std::vector<ClipRecord> train;
  std::vector<ClipRecord> val;
};

struct DatasetOptions {
  std::vector<MotionClass> classes{kAllClasses.begin(), kAllClasses.end()};
  std::size_t clips_per_class = 50;
  double train_fraction = 0.8;
  std::uint64_t seed = 7;
  std::size_t frame_size = 32;
  std::size_t target_length = 16;
  double noise = 0.05;
};

// Stratified, seed-reproducible split. Label indices are positions in
// options.classes.
DatasetSplit make_dataset(const DatasetOptions& options);

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

}  // namespace vidsal::data
