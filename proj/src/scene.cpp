// SPDX-License-Identifier: Apache-2.0
#include "ovqa/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "ovqa/rng.hpp"

namespace ovqa::scenegen {

const char* to_word(Shape s) {
  switch (s) {
    case Shape::kCube: return "cube";
    case Shape::kSphere: return "sphere";
    case Shape::kCylinder: return "cylinder";
  }
  return "?";
}

const char* plural_word(Shape s) {
  switch (s) {
    case Shape::kCube: return "cubes";
    case Shape::kSphere: return "spheres";
    case Shape::kCylinder: return "cylinders";
  }
  return "?";
}

const char* to_word(Color c) {
  switch (c) {
    case Color::kGray: return "gray";
    case Color::kRed: return "red";
    case Color::kBlue: return "blue";
    case Color::kGreen: return "green";
    case Color::kBrown: return "brown";
    case Color::kPurple: return "purple";
    case Color::kCyan: return "cyan";
    case Color::kYellow: return "yellow";
  }
  return "?";
}

const char* to_word(ObjSize s) {
  return s == ObjSize::kSmall ? "small" : "big";
}

const char* to_word(Direction d) {
  switch (d) {
    case Direction::kLeft: return "left";
    case Direction::kRight: return "right";
    case Direction::kUp: return "up";
    case Direction::kDown: return "down";
  }
  return "?";
}

bool ObjectSpec::moving_at(int frame) const {
  bool state = initially_moving;
  for (const Event& e : events) {
    if (e.frame > frame) continue;
    if (e.action == EventAction::kStartMoving) state = true;
    if (e.action == EventAction::kStopMoving) state = false;
  }
  return state;
}

bool ObjectSpec::rotating_at(int frame) const {
  bool state = initially_rotating;
  for (const Event& e : events) {
    if (e.frame > frame) continue;
    if (e.action == EventAction::kStartRotating) state = true;
    if (e.action == EventAction::kStopRotating) state = false;
  }
  return state;
}

std::optional<int> ObjectSpec::event_frame(EventAction a) const {
  std::optional<int> best;
  for (const Event& e : events) {
    if (e.action == a && (!best || e.frame < *best)) best = e.frame;
  }
  return best;
}

std::optional<Direction> ObjectSpec::direction() const {
  if (trajectory.size() < 2) return std::nullopt;
  const double dx = trajectory.back().cx - trajectory.front().cx;
  const double dy = trajectory.back().cy - trajectory.front().cy;
  if (std::max(std::fabs(dx), std::fabs(dy)) < 1e-9) return std::nullopt;
  if (std::fabs(dx) >= std::fabs(dy)) {
    return dx < 0 ? Direction::kLeft : Direction::kRight;
  }
  return dy < 0 ? Direction::kUp : Direction::kDown;
}

namespace {

// Events must toggle a consistent state machine, so sample them as state
// flips at distinct ascending frames.
void sample_events(Rng& rng, ObjectSpec& obj, int frames, int max_events) {
  const int n = rng.range(0, max_events);
  if (n == 0 || frames < 2) return;
  std::vector<int> frame_pool;
  for (int f = 1; f < frames; ++f) frame_pool.push_back(f);
  rng.shuffle(frame_pool);
  frame_pool.resize(std::min<std::size_t>(n, frame_pool.size()));
  std::sort(frame_pool.begin(), frame_pool.end());

  bool moving = obj.initially_moving;
  bool rotating = obj.initially_rotating;
  for (int f : frame_pool) {
    if (rng.chance(0.5)) {
      obj.events.push_back({moving ? EventAction::kStopMoving : EventAction::kStartMoving, f});
      moving = !moving;
    } else {
      obj.events.push_back(
          {rotating ? EventAction::kStopRotating : EventAction::kStartRotating, f});
      rotating = !rotating;
    }
  }
}

}  // namespace

SceneSpec generate_scene(std::uint64_t seed, const SceneGenConfig& cfg) {
  if (cfg.min_objects > cfg.max_objects || cfg.min_objects < 0 || cfg.frames < 1) {
    throw std::runtime_error("generate_scene: empty object or frame range");
  }
  // Rotation wobbles the extent by up to 12%; keep that inside the frame.
  const double max_extent = cfg.big_extent * 1.12;
  if (max_extent >= cfg.width || max_extent >= cfg.height) {
    throw std::runtime_error("generate_scene: objects cannot fit the frame (extent " +
                             std::to_string(max_extent) + " vs " + std::to_string(cfg.width) +
                             "x" + std::to_string(cfg.height) + ")");
  }

  Rng rng(seed);
  SceneSpec scene;
  scene.seed = seed;
  scene.frame_count = cfg.frames;
  scene.width = cfg.width;
  scene.height = cfg.height;

  const int n = rng.range(cfg.min_objects, cfg.max_objects);
  if (cfg.distinct_attributes && n > kShapeCount * kColorCount * kSizeCount) {
    throw std::runtime_error("generate_scene: more objects than distinct attribute tuples");
  }

  // attributes
  std::vector<std::array<int, 3>> used;
  for (int i = 0; i < n; ++i) {
    ObjectSpec obj;
    obj.id = i;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 400) {
        throw std::runtime_error("generate_scene: could not sample distinct attributes");
      }
      std::array<int, 3> tuple = {rng.range(0, kShapeCount - 1), rng.range(0, kColorCount - 1),
                                  rng.range(0, kSizeCount - 1)};
      if (cfg.distinct_attributes &&
          std::find(used.begin(), used.end(), tuple) != used.end()) {
        continue;
      }
      used.push_back(tuple);
      obj.shape = static_cast<Shape>(tuple[0]);
      obj.color = static_cast<Color>(tuple[1]);
      obj.size = static_cast<ObjSize>(tuple[2]);
      break;
    }
    obj.initially_moving = rng.chance(cfg.p_initially_moving);
    obj.initially_rotating = rng.chance(cfg.p_initially_rotating);
    sample_events(rng, obj, cfg.frames, cfg.max_events_per_object);
    scene.objects.push_back(std::move(obj));
  }

  // initial non-overlapping placement
  struct Body {
    double x, y, vx, vy, base_extent, phase;
  };
  std::vector<Body> bodies(n);
  for (int i = 0; i < n; ++i) {
    const double extent =
        scene.objects[i].size == ObjSize::kSmall ? cfg.small_extent : cfg.big_extent;
    const double half = extent * 1.12 / 2.0;
    bool placed = false;
    for (int attempt = 0; attempt < 600 && !placed; ++attempt) {
      const double x = rng.uniform(half, cfg.width - half);
      const double y = rng.uniform(half, cfg.height - half);
      bool clash = false;
      for (int j = 0; j < i; ++j) {
        const double oj = bodies[j].base_extent * 1.12 / 2.0;
        if (std::fabs(x - bodies[j].x) < half + oj && std::fabs(y - bodies[j].y) < half + oj) {
          clash = true;
          break;
        }
      }
      if (!clash) {
        const double speed = rng.uniform(cfg.min_speed, cfg.max_speed);
        const double angle = rng.uniform(0.0, 6.283185307179586);
        bodies[i] = {x,     y,     speed * std::cos(angle), speed * std::sin(angle),
                     extent, rng.uniform(0.0, 6.283185307179586)};
        placed = true;
      }
    }
    if (!placed) {
      throw std::runtime_error("generate_scene: could not place object " + std::to_string(i) +
                               " without overlap; frame too crowded");
    }
  }

  // integrate trajectories
  for (int i = 0; i < n; ++i) {
    ObjectSpec& obj = scene.objects[i];
    Body& b = bodies[i];
    obj.trajectory.resize(cfg.frames);
    for (int f = 0; f < cfg.frames; ++f) {
      const double wobble = obj.rotating_at(f) ? 1.0 + 0.12 * std::sin(0.9 * f + b.phase) : 1.0;
      FramePose pose;
      pose.cx = b.x;
      pose.cy = b.y;
      pose.ex = b.base_extent * wobble;
      pose.ey = b.base_extent * wobble;
      obj.trajectory[f] = pose;
      if (obj.moving_at(f)) {
        b.x += b.vx;
        b.y += b.vy;
        const double half = b.base_extent * 1.12 / 2.0;
        if (b.x < half) { b.x = 2 * half - b.x; b.vx = -b.vx; }
        if (b.x > cfg.width - half) { b.x = 2 * (cfg.width - half) - b.x; b.vx = -b.vx; }
        if (b.y < half) { b.y = 2 * half - b.y; b.vy = -b.vy; }
        if (b.y > cfg.height - half) { b.y = 2 * (cfg.height - half) - b.y; b.vy = -b.vy; }
      }
    }
  }
  return scene;
}

// ---------------------------------------------------------------------------
// detector emulation

namespace {

// Mixing matrices are derived from a constant seed so the embedding is a
// fixed function of the attributes, shared across datasets.
constexpr std::uint64_t kEmbeddingSeed = 0x0c0ffee1dea5ull;

std::vector<double> fixed_mixing_matrix(std::size_t rows, std::size_t cols,
                                        std::uint64_t salt) {
  Rng rng(subseed(kEmbeddingSeed, "mixing", salt));
  std::vector<double> m(rows * cols);
  const double scale = 1.0 / std::sqrt(3.0);
  for (double& v : m) v = rng.uniform(-scale, scale);
  return m;
}

}  // namespace

diff::NDArray attribute_embedding(Shape shape, Color color, ObjSize size, int d_a) {
  const std::size_t onehot = kShapeCount + kColorCount + kSizeCount;
  static thread_local std::vector<double> mix;
  static thread_local int cached_da = -1;
  if (cached_da != d_a) {
    mix = fixed_mixing_matrix(onehot, static_cast<std::size_t>(d_a), 1);
    cached_da = d_a;
  }
  diff::NDArray out = diff::NDArray::zeros(std::array<std::size_t, 1>{(std::size_t)d_a});
  const int hot[3] = {static_cast<int>(shape), kShapeCount + static_cast<int>(color),
                      kShapeCount + kColorCount + static_cast<int>(size)};
  for (int h : hot) {
    for (int j = 0; j < d_a; ++j) out[j] += mix[h * d_a + j];
  }
  return out;
}

RenderedScene render_detections(const SceneSpec& scene, const NoiseConfig& noise) {
  if (noise.p_miss < 0.0 || noise.p_miss >= 1.0 || noise.jitter_sigma < 0.0 ||
      noise.feature_sigma < 0.0) {
    throw std::invalid_argument("render_detections: p_miss must be in [0,1), sigmas >= 0");
  }
  Rng rng(subseed(noise.seed, "render", scene.seed));
  const std::size_t ctx_in = static_cast<std::size_t>(noise.d_a) + 4;
  const std::vector<double> ctx_mix =
      fixed_mixing_matrix(ctx_in, static_cast<std::size_t>(noise.d_c), 2);

  RenderedScene out;
  out.frames.resize(scene.frame_count);
  out.context.reserve(scene.frame_count);

  for (int f = 0; f < scene.frame_count; ++f) {
    // context is computed from the clean scene, before misses and jitter
    std::vector<double> raw(ctx_in, 0.0);
    if (!scene.objects.empty()) {
      double mcx = 0, mcy = 0, marea = 0;
      for (const ObjectSpec& obj : scene.objects) {
        const diff::NDArray feat = attribute_embedding(obj.shape, obj.color, obj.size, noise.d_a);
        for (int j = 0; j < noise.d_a; ++j) raw[j] += feat[j];
        const Box b = obj.trajectory[f].box();
        mcx += b.cx();
        mcy += b.cy();
        marea += b.area();
      }
      const double inv = 1.0 / static_cast<double>(scene.objects.size());
      for (int j = 0; j < noise.d_a; ++j) raw[j] *= inv;
      raw[noise.d_a + 0] = static_cast<double>(scene.objects.size()) / 8.0;
      raw[noise.d_a + 1] = mcx * inv / scene.width;
      raw[noise.d_a + 2] = mcy * inv / scene.height;
      raw[noise.d_a + 3] = marea * inv / (scene.width * scene.height);
    }
    diff::NDArray vc = diff::NDArray::zeros(std::array<std::size_t, 1>{(std::size_t)noise.d_c});
    for (std::size_t i = 0; i < ctx_in; ++i) {
      if (raw[i] == 0.0) continue;
      for (int j = 0; j < noise.d_c; ++j) vc[j] += raw[i] * ctx_mix[i * noise.d_c + j];
    }
    out.context.push_back(std::move(vc));

    for (const ObjectSpec& obj : scene.objects) {
      // Draw per-object noise unconditionally so the stream stays aligned
      // regardless of which detections are dropped.
      const bool miss = rng.uniform() < noise.p_miss;
      Box b = obj.trajectory[f].box();
      double jitter[4] = {rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1)};
      diff::NDArray feat = attribute_embedding(obj.shape, obj.color, obj.size, noise.d_a);
      for (int j = 0; j < noise.d_a; ++j) {
        feat[j] += noise.feature_sigma * rng.normal(0, 1);
      }
      const double conf_noise = rng.uniform();
      if (miss) continue;

      b.x_min += noise.jitter_sigma * jitter[0];
      b.y_min += noise.jitter_sigma * jitter[1];
      b.x_max += noise.jitter_sigma * jitter[2];
      b.y_max += noise.jitter_sigma * jitter[3];
      if (b.x_min > b.x_max) std::swap(b.x_min, b.x_max);
      if (b.y_min > b.y_max) std::swap(b.y_min, b.y_max);
      b.x_min = std::clamp(b.x_min, 0.0, static_cast<double>(scene.width));
      b.x_max = std::clamp(b.x_max, 0.0, static_cast<double>(scene.width));
      b.y_min = std::clamp(b.y_min, 0.0, static_cast<double>(scene.height));
      b.y_max = std::clamp(b.y_max, 0.0, static_cast<double>(scene.height));

      Detection det;
      det.frame = f;
      det.box = b;
      det.feature = std::move(feat);
      const double noisiness = noise.jitter_sigma + noise.feature_sigma;
      det.confidence =
          noisiness > 0.0 ? std::clamp(1.0 - 0.15 * noisiness * conf_noise, 0.05, 1.0) : 1.0;
      det.true_id = obj.id;
      out.frames[f].push_back(std::move(det));
    }
  }
  return out;
}

}  // namespace ovqa::scenegen
