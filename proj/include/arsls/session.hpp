#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "arsls/effect_log.hpp"
#include "arsls/entity_sim.hpp"
#include "arsls/event_protocol.hpp"
#include "arsls/result.hpp"
#include "arsls/scene_model.hpp"
#include "arsls/verse_game.hpp"

namespace arsls {

struct PlannedRound {
  std::int64_t at_ms = 0;
  RoundSpec spec;
  friend bool operator==(const PlannedRound&, const PlannedRound&) = default;
};

inline constexpr std::int64_t kDefaultSessionMs = 1'200'000;
inline constexpr std::int64_t kDefaultFirstRoundMs = 180'000;
inline constexpr std::int64_t kDefaultSecondRoundMs = 660'000;
inline constexpr std::string_view kDefaultThemeTag = "hangzhou-jiangnan";

struct SessionPlan {
  std::int64_t total_duration_ms = kDefaultSessionMs;
  std::vector<PlannedRound> rounds;
  std::uint64_t seed = 42;

  /// Twenty minutes; a "花" keyword round at 3:00 unlocking the petal field
  /// and a Hangzhou/Jiangnan theme round at 11:00 unlocking a firework volley.
  static SessionPlan defaults();

  friend bool operator==(const SessionPlan&, const SessionPlan&) = default;
};

struct PlanError {
  std::string message;
};

/// Checks that every round fits inside the session and that rounds do not overlap.
std::optional<PlanError> validate_plan(const SessionPlan& plan);
Result<SessionPlan, PlanError> load_plan(std::string_view document);
std::string plan_to_json(const SessionPlan& plan);

/// Event line as written to a session recording: the wire event plus the tick
/// it was applied in.
struct RecordedEvent {
  RoomEvent event;
  std::optional<std::int64_t> apply_tick;
};

std::string encode_recorded(const RoomEvent& event, std::int64_t apply_tick);
Result<RecordedEvent, DecodeError> decode_recorded(std::string_view line);

/// The sequencer core: applies scheduled rounds, ordered events and fixed
/// ticks to one Simulation. Both replay and the live server drive this.
class SessionEngine {
 public:
  SessionEngine(std::shared_ptr<const SceneConfig> scene, std::shared_ptr<const VerseCorpus> corpus,
                SessionPlan plan, EffectLog* log);

  const SessionPlan& plan() const { return plan_; }
  const Simulation& sim() const { return sim_; }
  Simulation& sim() { return sim_; }
  std::int64_t tick() const { return sim_.state().tick; }
  std::int64_t total_ticks() const { return total_ticks_; }
  bool finished() const { return tick() >= total_ticks_; }
  int tick_hz() const { return scene_->tuning.tick_hz; }

  /// The tick an event with this timestamp belongs to.
  std::int64_t tick_for_ms(std::int64_t ts_ms) const;
  std::int64_t start_tick_of(const PlannedRound& round) const { return tick_for_ms(round.at_ms); }

  /// Runs the current tick: scheduled rounds, then `events` in the given
  /// order (callers sort by (ts, arrival)), then one integration step.
  /// Events quantized to an earlier tick are flagged late.
  void step(const std::vector<SequencedEvent>& events);

  /// Writes the session.end record. Idempotent.
  void finish();
  bool finished_logged() const { return end_logged_; }

 private:
  std::shared_ptr<const SceneConfig> scene_;
  SessionPlan plan_;
  std::int64_t total_ticks_;
  Simulation sim_;
  bool end_logged_ = false;
};

}  // namespace arsls
