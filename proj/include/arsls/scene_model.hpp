#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "arsls/geometry.hpp"
#include "arsls/result.hpp"

namespace arsls {

struct Screen {
  int width_px = 0;
  int height_px = 0;
  friend bool operator==(const Screen&, const Screen&) = default;
};

struct Occluder {
  Polygon polygon;
  double depth = 0.0;  // same scale as depth_of(): larger = farther
  friend bool operator==(const Occluder&, const Occluder&) = default;
};

/// Kinematic and presentation constants. Every value must be strictly positive.
struct TuningConstants {
  double lotus_drift_px_s = 12.0;
  double lotus_dash_multiplier = 6.0;
  std::int64_t dash_duration_ms = 1500;
  std::int64_t ripple_period_ms = 800;
  std::int64_t ripple_lifetime_ms = 1200;
  std::int64_t fish_jump_duration_ms = 1000;
  double umbrella_ascent_px_s = 30.0;
  std::int64_t firework_flight_ms = 1400;
  int tick_hz = 30;

  // Sprite extents and effect shapes; not tied to any observed value.
  double lotus_half_width_px = 24.0;
  double lotus_half_height_px = 12.0;
  double lotus_bob_amplitude_px = 3.0;
  std::int64_t lotus_bob_period_ms = 2400;
  int fish_looks = 4;
  double fish_jump_height_px = 60.0;
  double fish_jump_span_px = 80.0;
  int umbrella_textures = 6;
  double umbrella_half_width_px = 28.0;
  double umbrella_half_height_px = 28.0;
  std::int64_t firework_burst_ms = 1200;
  double firework_rise_min_px = 180.0;
  double firework_rise_max_px = 320.0;
  int firework_particles_min = 24;
  int firework_particles_max = 48;
  int volley_count = 8;
  std::int64_t volley_span_ms = 3000;

  double tick_ms() const { return 1000.0 / tick_hz; }
  friend bool operator==(const TuningConstants&, const TuningConstants&) = default;
};

struct SceneConfig {
  Screen screen;
  std::string background_ref;
  Polygon water;
  std::vector<Occluder> occluders;
  Segment firework_spawn;
  Polygon lotus_spawn;
  TuningConstants tuning;

  friend bool operator==(const SceneConfig&, const SceneConfig&) = default;
};

struct SceneError {
  std::string path;     // offending field, e.g. "water" or "occluders[1].depth"
  std::string message;
  std::string to_string() const { return message.empty() ? path : path + ": " + message; }
};

/// Parses and validates a scene-config JSON document.
Result<SceneConfig, SceneError> load_scene(std::string_view document);
std::string scene_to_json(const SceneConfig& cfg);

bool point_in_water(const SceneConfig& cfg, Point p);

/// Scene depth for a water-borne point: larger y is nearer the camera.
inline double depth_of(const SceneConfig&, Point p) { return -p.y; }

/// Back-to-front draw order: farther (larger depth) first, ties by id.
inline bool draws_before(double depth_a, std::uint64_t id_a, double depth_b, std::uint64_t id_b) {
  if (depth_a != depth_b) return depth_a > depth_b;
  return id_a < id_b;
}

}  // namespace arsls
