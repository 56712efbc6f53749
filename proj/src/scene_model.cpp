#include "arsls/scene_model.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <optional>

namespace arsls {

using nlohmann::json;

namespace {

struct Fail {
  SceneError error;
};

[[noreturn]] void fail(std::string path, std::string message = {}) {
  throw Fail{SceneError{std::move(path), std::move(message)}};
}

const json& require(const json& obj, const char* key, const std::string& path) {
  const auto it = obj.find(key);
  if (it == obj.end()) fail(path, "missing");
  return *it;
}

double finite_number(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) fail(path, "not finite");
  return d;
}

Point parse_point(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2) fail(path, "expected [x, y]");
  return {finite_number(v[0], path + "[0]"), finite_number(v[1], path + "[1]")};
}

Polygon parse_polygon(const json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected an array of [x, y] pairs");
  Polygon poly;
  for (std::size_t i = 0; i < v.size(); ++i) poly.push_back(parse_point(v[i], path + "[" + std::to_string(i) + "]"));
  return poly;
}

template <typename T>
void positive_field(const json& tuning, const char* key, T& out) {
  const auto it = tuning.find(key);
  if (it == tuning.end()) return;
  const std::string path = std::string("tuning.") + key;
  if constexpr (std::is_integral_v<T>) {
    if (!it->is_number_integer()) fail(path, "expected an integer");
    out = it->get<T>();
  } else {
    out = finite_number(*it, path);
  }
  if (!(out > 0)) fail(path, "must be strictly positive");
}

TuningConstants parse_tuning(const json& t) {
  if (!t.is_object()) fail("tuning", "expected an object");
  TuningConstants c;
  positive_field(t, "lotus_drift_px_s", c.lotus_drift_px_s);
  positive_field(t, "lotus_dash_multiplier", c.lotus_dash_multiplier);
  positive_field(t, "dash_duration_ms", c.dash_duration_ms);
  positive_field(t, "ripple_period_ms", c.ripple_period_ms);
  positive_field(t, "ripple_lifetime_ms", c.ripple_lifetime_ms);
  positive_field(t, "fish_jump_duration_ms", c.fish_jump_duration_ms);
  positive_field(t, "umbrella_ascent_px_s", c.umbrella_ascent_px_s);
  positive_field(t, "firework_flight_ms", c.firework_flight_ms);
  positive_field(t, "tick_hz", c.tick_hz);
  positive_field(t, "lotus_half_width_px", c.lotus_half_width_px);
  positive_field(t, "lotus_half_height_px", c.lotus_half_height_px);
  positive_field(t, "lotus_bob_amplitude_px", c.lotus_bob_amplitude_px);
  positive_field(t, "lotus_bob_period_ms", c.lotus_bob_period_ms);
  positive_field(t, "fish_looks", c.fish_looks);
  positive_field(t, "fish_jump_height_px", c.fish_jump_height_px);
  positive_field(t, "fish_jump_span_px", c.fish_jump_span_px);
  positive_field(t, "umbrella_textures", c.umbrella_textures);
  positive_field(t, "umbrella_half_width_px", c.umbrella_half_width_px);
  positive_field(t, "umbrella_half_height_px", c.umbrella_half_height_px);
  positive_field(t, "firework_burst_ms", c.firework_burst_ms);
  positive_field(t, "firework_rise_min_px", c.firework_rise_min_px);
  positive_field(t, "firework_rise_max_px", c.firework_rise_max_px);
  positive_field(t, "firework_particles_min", c.firework_particles_min);
  positive_field(t, "firework_particles_max", c.firework_particles_max);
  positive_field(t, "volley_count", c.volley_count);
  positive_field(t, "volley_span_ms", c.volley_span_ms);
  if (const auto it = t.find("petal_field_lifetime"); it != t.end()) {
    if (*it != "lasting") fail("tuning.petal_field_lifetime", "only \"lasting\" is supported");
  }
  if (c.firework_rise_min_px > c.firework_rise_max_px) fail("tuning.firework_rise_min_px", "exceeds max");
  if (c.firework_particles_min > c.firework_particles_max) fail("tuning.firework_particles_min", "exceeds max");
  return c;
}

// Point-sampled containment: every vertex plus a grid of interior points.
bool region_within(const Polygon& inner, const Polygon& outer) {
  for (const Point& p : inner) {
    if (!point_in_polygon(outer, p)) return false;
  }
  const Box box = bounding_box(inner);
  constexpr int kGrid = 16;
  for (int i = 0; i <= kGrid; ++i) {
    for (int j = 0; j <= kGrid; ++j) {
      const Point p{box.min_x + box.width() * i / kGrid, box.min_y + box.height() * j / kGrid};
      if (point_in_polygon(inner, p) && !point_in_polygon(outer, p)) return false;
    }
  }
  return true;
}

SceneConfig parse_scene(const json& doc) {
  if (!doc.is_object()) fail("$", "expected a JSON object");
  SceneConfig cfg;

  const json& screen = require(doc, "screen", "screen");
  const json& w = require(screen, "width_px", "screen.width_px");
  const json& h = require(screen, "height_px", "screen.height_px");
  if (!w.is_number_integer() || w.get<long long>() <= 0 || w.get<long long>() > 16384) {
    fail("screen.width_px", "must be a positive integer");
  }
  if (!h.is_number_integer() || h.get<long long>() <= 0 || h.get<long long>() > 16384) {
    fail("screen.height_px", "must be a positive integer");
  }
  cfg.screen = {w.get<int>(), h.get<int>()};

  if (const auto it = doc.find("background_ref"); it != doc.end()) {
    if (!it->is_string()) fail("background_ref", "expected a string");
    cfg.background_ref = it->get<std::string>();
  }

  cfg.water = parse_polygon(require(doc, "water", "water"), "water");
  if (cfg.water.size() < 3) fail("water", "needs at least 3 vertices");
  if (!is_simple(cfg.water)) fail("water", "not simple");

  if (const auto it = doc.find("occluders"); it != doc.end()) {
    if (!it->is_array()) fail("occluders", "expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string path = "occluders[" + std::to_string(i) + "]";
      const json& o = (*it)[i];
      if (!o.is_object()) fail(path, "expected an object");
      Occluder occ;
      occ.polygon = parse_polygon(require(o, "polygon", path + ".polygon"), path + ".polygon");
      if (occ.polygon.size() < 3) fail(path + ".polygon", "needs at least 3 vertices");
      occ.depth = finite_number(require(o, "depth", path + ".depth"), path + ".depth");
      cfg.occluders.push_back(std::move(occ));
    }
  }

  const json& fw = require(doc, "firework_spawn", "firework_spawn");
  if (!fw.is_array() || fw.size() != 2) fail("firework_spawn", "expected [[x, y], [x, y]]");
  cfg.firework_spawn = {parse_point(fw[0], "firework_spawn[0]"), parse_point(fw[1], "firework_spawn[1]")};

  cfg.lotus_spawn = parse_polygon(require(doc, "lotus_spawn", "lotus_spawn"), "lotus_spawn");
  if (cfg.lotus_spawn.size() < 3) fail("lotus_spawn", "needs at least 3 vertices");
  if (!is_simple(cfg.lotus_spawn)) fail("lotus_spawn", "not simple");
  if (!region_within(cfg.lotus_spawn, cfg.water)) fail("lotus_spawn", "not inside water");

  if (const auto it = doc.find("tuning"); it != doc.end()) cfg.tuning = parse_tuning(*it);
  return cfg;
}

json polygon_json(const Polygon& poly) {
  json arr = json::array();
  for (const Point& p : poly) arr.push_back({p.x, p.y});
  return arr;
}

}  // namespace

Result<SceneConfig, SceneError> load_scene(std::string_view document) {
  json doc = json::parse(document, nullptr, false);
  if (doc.is_discarded()) return SceneError{"$", "invalid JSON"};
  try {
    return parse_scene(doc);
  } catch (const Fail& f) {
    return f.error;
  } catch (const json::exception& e) {
    return SceneError{"$", e.what()};
  }
}

std::string scene_to_json(const SceneConfig& cfg) {
  const TuningConstants& t = cfg.tuning;
  json occluders = json::array();
  for (const Occluder& o : cfg.occluders) occluders.push_back({{"polygon", polygon_json(o.polygon)}, {"depth", o.depth}});
  json doc = {
      {"screen", {{"width_px", cfg.screen.width_px}, {"height_px", cfg.screen.height_px}}},
      {"background_ref", cfg.background_ref},
      {"water", polygon_json(cfg.water)},
      {"occluders", occluders},
      {"firework_spawn", json::array({json::array({cfg.firework_spawn.a.x, cfg.firework_spawn.a.y}),
                                      json::array({cfg.firework_spawn.b.x, cfg.firework_spawn.b.y})})},
      {"lotus_spawn", polygon_json(cfg.lotus_spawn)},
      {"tuning",
       {{"lotus_drift_px_s", t.lotus_drift_px_s},
        {"lotus_dash_multiplier", t.lotus_dash_multiplier},
        {"dash_duration_ms", t.dash_duration_ms},
        {"ripple_period_ms", t.ripple_period_ms},
        {"ripple_lifetime_ms", t.ripple_lifetime_ms},
        {"fish_jump_duration_ms", t.fish_jump_duration_ms},
        {"umbrella_ascent_px_s", t.umbrella_ascent_px_s},
        {"firework_flight_ms", t.firework_flight_ms},
        {"petal_field_lifetime", "lasting"},
        {"tick_hz", t.tick_hz},
        {"lotus_half_width_px", t.lotus_half_width_px},
        {"lotus_half_height_px", t.lotus_half_height_px},
        {"lotus_bob_amplitude_px", t.lotus_bob_amplitude_px},
        {"lotus_bob_period_ms", t.lotus_bob_period_ms},
        {"fish_looks", t.fish_looks},
        {"fish_jump_height_px", t.fish_jump_height_px},
        {"fish_jump_span_px", t.fish_jump_span_px},
        {"umbrella_textures", t.umbrella_textures},
        {"umbrella_half_width_px", t.umbrella_half_width_px},
        {"umbrella_half_height_px", t.umbrella_half_height_px},
        {"firework_burst_ms", t.firework_burst_ms},
        {"firework_rise_min_px", t.firework_rise_min_px},
        {"firework_rise_max_px", t.firework_rise_max_px},
        {"firework_particles_min", t.firework_particles_min},
        {"firework_particles_max", t.firework_particles_max},
        {"volley_count", t.volley_count},
        {"volley_span_ms", t.volley_span_ms}}},
  };
  return doc.dump(2);
}

bool point_in_water(const SceneConfig& cfg, Point p) { return point_in_polygon(cfg.water, p); }

}  // namespace arsls
