#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "arsls/compositor.hpp"
#include "arsls/entity_sim.hpp"
#include "arsls/result.hpp"
#include "arsls/session.hpp"

namespace arsls {

struct RoundOutcome {
  std::string label;
  RoundStatus status = RoundStatus::Running;
  std::size_t accepted = 0;
  std::optional<std::int64_t> won_at_ms;
  friend bool operator==(const RoundOutcome&, const RoundOutcome&) = default;
};

struct ReplayReport {
  std::string digest;
  std::string state_digest;
  SimCounters counters;
  std::vector<RoundOutcome> rounds;
  std::int64_t ticks = 0;
  std::size_t effect_records = 0;
  std::int64_t events_after_end = 0;
  std::int64_t frames_written = 0;
  double wall_time_ms = 0.0;
};

nlohmann::json report_json(const ReplayReport& report);
std::vector<RoundOutcome> round_outcomes(const SimState& state);

struct ReplayError {
  std::string message;
};

/// Parses an event log (wire lines, optionally carrying `apply_tick`). Blank
/// lines are skipped; a bad line fails with its 1-based number.
Result<std::vector<RecordedEvent>, ReplayError> parse_event_log(std::string_view text);

struct FrameDump {
  std::filesystem::path dir;
  int every = 1;
  Frame background;
};

/// In-memory replay. Events are applied in (apply tick, ts, file order); the
/// clock is virtual, so nothing sleeps.
ReplayReport replay(const std::shared_ptr<const SceneConfig>& scene, const std::shared_ptr<const VerseCorpus>& corpus,
                    const SessionPlan& plan, const std::vector<RecordedEvent>& events,
                    std::ostream* effect_sink = nullptr, const FrameDump* frames = nullptr,
                    EffectLog* log_out = nullptr);

struct ReplayFiles {
  std::filesystem::path log;
  std::filesystem::path scene;
  std::filesystem::path corpus;
  std::optional<std::filesystem::path> plan;
  std::optional<std::uint64_t> seed;  // overrides the plan's seed
  std::optional<std::filesystem::path> frames_dir;
  int every = 1;
  std::optional<std::filesystem::path> effects_out;
};

Result<std::string, ReplayError> read_file(const std::filesystem::path& path);
Result<ReplayReport, ReplayError> replay_files(const ReplayFiles& files);

struct TraceDiff {
  bool equal = true;
  std::size_t line_no = 0;  // 1-based line of the first divergence
  std::optional<std::string> a;  // nullopt = that trace ended
  std::optional<std::string> b;
  std::vector<std::string> context;  // up to 3 shared lines before the divergence
};

TraceDiff diff_traces(const std::vector<std::string>& a, const std::vector<std::string>& b);
std::vector<std::string> split_lines(std::string_view text);

// ---------------------------------------------------------------------------
// Synthetic traffic (test scaffolding for load and determinism checks).

struct TrafficOptions {
  std::uint64_t seed = 1;
  std::int64_t duration_ms = kDefaultSessionMs;
  std::size_t events = 2000;
  std::size_t users = 15;
};

/// Uniformly scattered arrivals (a Poisson process conditioned on its count)
/// mixing every command, both gift tiers, and verse attempts during rounds.
std::vector<RoomEvent> generate_traffic(const TrafficOptions& options, const VerseCorpus& corpus,
                                        const SessionPlan& plan);

}  // namespace arsls
