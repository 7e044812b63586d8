// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ovqa/ndarray.hpp"

namespace ovqa::scenegen {

enum class Shape { kCube, kSphere, kCylinder };
enum class Color { kGray, kRed, kBlue, kGreen, kBrown, kPurple, kCyan, kYellow };
enum class ObjSize { kSmall, kBig };
enum class EventAction { kStartMoving, kStopMoving, kStartRotating, kStopRotating };
enum class Direction { kLeft, kRight, kUp, kDown };

constexpr int kShapeCount = 3;
constexpr int kColorCount = 8;
constexpr int kSizeCount = 2;

const char* to_word(Shape s);
const char* to_word(Color c);
const char* to_word(ObjSize s);
const char* to_word(Direction d);
const char* plural_word(Shape s);

struct Event {
  EventAction action;
  int frame;  // takes effect from this frame onward
};

struct Box {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x_min + x_max); }
  double cy() const { return 0.5 * (y_min + y_max); }
};

/// Per-frame center and extent; the axis-aligned box is derived.
struct FramePose {
  double cx = 0, cy = 0;
  double ex = 0, ey = 0;  // full extents
  Box box() const { return {cx - ex / 2, cy - ey / 2, cx + ex / 2, cy + ey / 2}; }
};

struct ObjectSpec {
  int id = 0;
  Shape shape = Shape::kCube;
  Color color = Color::kGray;
  ObjSize size = ObjSize::kSmall;
  bool initially_moving = false;
  bool initially_rotating = false;
  std::vector<FramePose> trajectory;  // length T
  std::vector<Event> events;

  bool moving_at(int frame) const;
  bool rotating_at(int frame) const;
  /// Frame of the first event with this action, if any.
  std::optional<int> event_frame(EventAction a) const;
  /// Dominant net-displacement direction over the whole video; nullopt for
  /// (numerically) static objects.
  std::optional<Direction> direction() const;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  int frame_count = 0;  // T
  int width = 0, height = 0;
  std::vector<ObjectSpec> objects;
};

struct SceneGenConfig {
  int min_objects = 2;
  int max_objects = 4;
  int frames = 16;
  int width = 160;
  int height = 120;
  double min_speed = 2.0;   // px per frame
  double max_speed = 6.0;
  double p_initially_moving = 0.5;
  double p_initially_rotating = 0.35;
  int max_events_per_object = 2;
  bool distinct_attributes = true;
  double small_extent = 14.0;
  double big_extent = 26.0;
};

/// Deterministic scene synthesis. Objects are placed without initial
/// overlap, move with wall bounces, and toggle motion/rotation at event
/// frames. Rotating objects wobble their box extent so rotation is visible
/// to the detector emulation. Throws std::runtime_error when the config
/// cannot fit the requested objects into the frame.
SceneSpec generate_scene(std::uint64_t seed, const SceneGenConfig& config);

// ---------------------------------------------------------------------------

struct Detection {
  int frame = 0;
  Box box;
  diff::NDArray feature;  // v_a, appearance embedding
  double confidence = 1.0;
  int true_id = -1;  // hidden ground-truth identity, for evaluation only
};

struct NoiseConfig {
  double p_miss = 0.0;       // per-detection drop probability
  double jitter_sigma = 0.0;  // box coordinate noise, px
  double feature_sigma = 0.0;
  std::uint64_t seed = 0;
  int d_a = 24;
  int d_c = 16;
};

struct RenderedScene {
  std::vector<std::vector<Detection>> frames;  // per frame, detection list
  std::vector<diff::NDArray> context;          // per frame v_c
};

/// Emulates a detector+backbone: each present object yields one detection
/// whose appearance feature is a fixed seeded mixing of its one-hot
/// attribute blocks plus Gaussian noise; detections drop out independently
/// with p_miss. The per-frame context feature summarizes the clean scene
/// (mean appearance, object count, mean position and area).
RenderedScene render_detections(const SceneSpec& scene, const NoiseConfig& noise);

/// The fixed attribute embedding used by render_detections, noise-free.
diff::NDArray attribute_embedding(Shape shape, Color color, ObjSize size, int d_a);

}  // namespace ovqa::scenegen
