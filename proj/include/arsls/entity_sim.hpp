#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "arsls/effect_log.hpp"
#include "arsls/event_protocol.hpp"
#include "arsls/geometry.hpp"
#include "arsls/rng.hpp"
#include "arsls/scene_model.hpp"
#include "arsls/verse_game.hpp"

namespace arsls {

using EntityId = std::uint64_t;

struct Lotus {
  EntityId id = 0;
  std::string owner_id;
  std::string owner_name;
  Point pos;
  double base_y = 0.0;  // pos.y without the bob
  Point vel;            // px/s; x is the drift outside a dash
  double born_ms = 0.0;
  double bob_phase = 0.0;
  std::optional<double> dash_until_ms;
  double next_ripple_at_ms = 0.0;

  friend bool operator==(const Lotus&, const Lotus&) = default;
};

struct Fish {
  EntityId id = 0;
  std::string owner_id;
  std::string owner_name;
  Point food_pos;
  double started_at_ms = 0.0;
  int look_id = 0;

  friend bool operator==(const Fish&, const Fish&) = default;
};

struct Particle {
  double angle = 0.0;  // radians
  double speed = 0.0;  // px/s
  int color = 0;
  friend bool operator==(const Particle&, const Particle&) = default;
};

enum class FireworkPhase { Ascending, Exploding };

struct Firework {
  EntityId id = 0;
  std::string tipper_id;
  std::string tipper_name;
  Point spawn;
  Point apex;
  double launched_at_ms = 0.0;
  FireworkPhase phase = FireworkPhase::Ascending;
  double exploded_at_ms = 0.0;
  std::vector<Particle> particles;

  friend bool operator==(const Firework&, const Firework&) = default;
};

/// A volley firework waiting for its staggered launch time.
struct PendingFirework {
  double launch_at_ms = 0.0;
  Point spawn;
  Point apex;
  friend bool operator==(const PendingFirework&, const PendingFirework&) = default;
};

struct Umbrella {
  EntityId id = 0;
  std::string owner_id;
  std::string owner_name;
  int texture_id = 0;
  std::string story;
  Point pos;
  Point vel;

  friend bool operator==(const Umbrella&, const Umbrella&) = default;
};

struct UmbrellaToken {
  std::string owner_id;
  double granted_at_ms = 0.0;
  int texture_id = 0;
  friend bool operator==(const UmbrellaToken&, const UmbrellaToken&) = default;
};

struct Ripple {
  EntityId id = 0;
  Point center;
  double born_at_ms = 0.0;
  friend bool operator==(const Ripple&, const Ripple&) = default;
};

struct SimCounters {
  std::int64_t events = 0;
  std::int64_t late_events = 0;
  std::map<std::string, std::int64_t> commands;   // by Command variant name
  std::map<std::string, std::int64_t> judgments;  // by Judgment name
  std::map<std::string, std::int64_t> rejections; // by reason
  std::int64_t gifts = 0;
  std::int64_t fireworks = 0;
  std::int64_t tokens_granted = 0;
  std::int64_t tokens_consumed = 0;
  std::int64_t lotuses_spawned = 0;
  std::int64_t lotuses_despawned = 0;
  std::int64_t fish = 0;
  std::int64_t umbrellas = 0;
  std::int64_t ripples = 0;

  friend bool operator==(const SimCounters&, const SimCounters&) = default;
};

/// Everything that evolves during a session. A plain value, so copies are
/// immutable snapshots for the server and compositor.
struct SimState {
  std::int64_t tick = 0;
  int tick_hz = 30;
  SplitRng rng;
  EntityId next_id = 1;
  std::vector<Lotus> lotuses;
  std::vector<Fish> fishes;
  std::vector<Firework> fireworks;
  std::vector<PendingFirework> pending_fireworks;
  std::vector<Umbrella> umbrellas;
  std::vector<Ripple> ripples;
  std::map<std::string, std::deque<UmbrellaToken>> tokens;
  bool petal_field = false;
  VerseGame verse;
  SimCounters counters;

  /// Simulated time at the start of the current tick.
  double now_exact_ms() const { return static_cast<double>(tick) * 1000.0 / tick_hz; }
  std::int64_t now_ms() const { return tick * 1000 / tick_hz; }

  const Lotus* lotus_of(std::string_view owner_id) const;
  std::size_t tokens_held(std::string_view owner_id) const;
};

/// Fish position along its jump: a parabola from food.x - span/2 to
/// food.x + span/2, highest directly above the food at half the duration.
Point fish_position(const Fish& fish, const TuningConstants& tuning, double now_ms);
/// 0..1 through the jump.
double fish_phase(const Fish& fish, const TuningConstants& tuning, double now_ms);
Point firework_position(const Firework& fw, const TuningConstants& tuning, double now_ms);

inline const std::string kEveryone = "everyone";

/// Deterministic fixed-timestep simulation of all AR entities. Owns the state,
/// appends every visible outcome to the effect log.
class Simulation {
 public:
  Simulation(std::shared_ptr<const SceneConfig> scene, std::shared_ptr<const VerseCorpus> corpus,
             std::uint64_t seed, EffectLog* log);

  const SimState& state() const { return state_; }
  const SceneConfig& scene() const { return *scene_; }
  const VerseCorpus& corpus() const { return *corpus_; }
  double tick_ms() const { return scene_->tuning.tick_ms(); }

  /// Decodes a chat line into a command or routes a gift. `late` marks events
  /// whose timestamp precedes the tick they are applied in.
  void apply_event(const RoomEvent& event, bool late = false);
  void apply_command(const std::string& user_id, const std::string& user_name, const Command& command,
                     std::int64_t judged_at_ms);
  void apply_gift(const std::string& user_id, const std::string& user_name, Cny amount);
  void win_effect(WinEffect effect);

  /// Starts a verse round at the current tick; logs a rejection if one is
  /// already running.
  bool start_round(const RoundSpec& spec, std::int64_t started_at_ms);

  /// Advances one fixed step.
  void tick();

  void log_session_end();

  /// SHA-256 over a canonical dump of the full state.
  std::string state_digest() const;

  void set_command_table(CommandTable table) { commands_ = std::move(table); }

 private:
  void log(std::string kind, std::optional<std::string> user, nlohmann::json data = nlohmann::json::object());
  void reject(const std::string& user_id, std::string_view action, std::string_view reason);
  void launch_firework(std::string tipper_id, std::string tipper_name, Point spawn, Point apex, double at_ms);
  Point sample_in(const Polygon& poly, RngStream& stream) const;
  Point sample_firework_apex(Point spawn, RngStream& stream) const;

  void step_lotuses(double t0, double t1);
  void step_fish(double t1);
  void step_fireworks(double t1);
  void step_umbrellas(double t0, double t1);
  void step_ripples(double t1);

  std::shared_ptr<const SceneConfig> scene_;
  std::shared_ptr<const VerseCorpus> corpus_;
  EffectLog* log_;
  CommandTable commands_ = CommandTable::defaults();
  SimState state_;
  bool current_event_late_ = false;
};

}  // namespace arsls
