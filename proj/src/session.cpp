#include "arsls/session.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>

namespace arsls {

using nlohmann::json;

SessionPlan SessionPlan::defaults() {
  SessionPlan plan;
  RoundSpec flower;
  flower.mode = KeywordMode{"花"};
  flower.win_effect = WinEffect::PetalField;
  RoundSpec theme;
  theme.mode = ThemeMode{std::string(kDefaultThemeTag)};
  theme.win_effect = WinEffect::FireworkVolley;
  plan.rounds = {{kDefaultFirstRoundMs, flower}, {kDefaultSecondRoundMs, theme}};
  return plan;
}

std::optional<PlanError> validate_plan(const SessionPlan& plan) {
  if (plan.total_duration_ms <= 0) return PlanError{"total_duration_ms must be positive"};
  std::vector<PlannedRound> rounds = plan.rounds;
  std::sort(rounds.begin(), rounds.end(), [](const auto& a, const auto& b) { return a.at_ms < b.at_ms; });
  for (std::size_t i = 0; i < rounds.size(); ++i) {
    const PlannedRound& r = rounds[i];
    if (!r.spec.valid()) return PlanError{"round " + std::to_string(i) + ": invalid duration or threshold"};
    if (r.at_ms < 0 || r.at_ms + r.spec.duration_ms > plan.total_duration_ms) {
      return PlanError{"round at " + std::to_string(r.at_ms) + " ms does not fit inside the session"};
    }
    if (i > 0 && rounds[i - 1].at_ms + rounds[i - 1].spec.duration_ms > r.at_ms) {
      return PlanError{"rounds at " + std::to_string(rounds[i - 1].at_ms) + " ms and " + std::to_string(r.at_ms) +
                       " ms overlap"};
    }
  }
  return std::nullopt;
}

Result<SessionPlan, PlanError> load_plan(std::string_view document) {
  const json doc = json::parse(document, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return PlanError{"plan: invalid JSON object"};
  try {
    SessionPlan plan;
    plan.total_duration_ms = doc.value("total_duration_ms", kDefaultSessionMs);
    plan.seed = doc.value("seed", std::uint64_t{42});
    if (const auto it = doc.find("rounds"); it != doc.end()) {
      if (!it->is_array()) return PlanError{"rounds: expected an array"};
      for (const json& r : *it) {
        PlannedRound round;
        round.at_ms = r.at("at_ms").get<std::int64_t>();
        const std::string mode = r.at("mode").get<std::string>();
        const std::string value = r.at("value").get<std::string>();
        if (mode == "keyword") {
          round.spec.mode = KeywordMode{value};
        } else if (mode == "theme") {
          round.spec.mode = ThemeMode{value};
        } else {
          return PlanError{"rounds: mode must be \"keyword\" or \"theme\""};
        }
        round.spec.duration_ms = r.value("duration_ms", kDefaultRoundDurationMs);
        round.spec.threshold = r.value("threshold", kDefaultRoundThreshold);
        const auto effect = win_effect_from_string(r.value("win_effect", std::string("petal_field")));
        if (!effect) return PlanError{"rounds: unknown win_effect"};
        round.spec.win_effect = *effect;
        plan.rounds.push_back(std::move(round));
      }
    } else {
      plan.rounds = SessionPlan::defaults().rounds;
    }
    if (auto err = validate_plan(plan)) return *err;
    return plan;
  } catch (const json::exception& e) {
    return PlanError{std::string("plan: ") + e.what()};
  }
}

std::string plan_to_json(const SessionPlan& plan) {
  json rounds = json::array();
  for (const PlannedRound& r : plan.rounds) {
    const bool keyword = std::holds_alternative<KeywordMode>(r.spec.mode);
    rounds.push_back({{"at_ms", r.at_ms},
                      {"mode", keyword ? "keyword" : "theme"},
                      {"value", keyword ? std::get<KeywordMode>(r.spec.mode).keyword : std::get<ThemeMode>(r.spec.mode).tag},
                      {"duration_ms", r.spec.duration_ms},
                      {"threshold", r.spec.threshold},
                      {"win_effect", to_string(r.spec.win_effect)}});
  }
  return json{{"total_duration_ms", plan.total_duration_ms}, {"seed", plan.seed}, {"rounds", rounds}}.dump(2);
}

std::string encode_recorded(const RoomEvent& event, std::int64_t apply_tick) {
  std::string line = encode_event(event);
  line.pop_back();  // reopen the object
  line += ",\"apply_tick\":" + std::to_string(apply_tick) + "}";
  return line;
}

Result<RecordedEvent, DecodeError> decode_recorded(std::string_view line) {
  auto event = decode_event(line);
  if (!event) return event.error();
  RecordedEvent rec{std::move(event).value(), std::nullopt};
  const json doc = json::parse(line, nullptr, false);
  if (const auto it = doc.find("apply_tick"); it != doc.end()) {
    if (!it->is_number_integer() || it->get<std::int64_t>() < 0) return DecodeError::Malformed;
    rec.apply_tick = it->get<std::int64_t>();
  }
  return rec;
}

SessionEngine::SessionEngine(std::shared_ptr<const SceneConfig> scene, std::shared_ptr<const VerseCorpus> corpus,
                             SessionPlan plan, EffectLog* log)
    : scene_(scene),
      plan_(std::move(plan)),
      total_ticks_(plan_.total_duration_ms * scene->tuning.tick_hz / 1000),
      sim_(scene, std::move(corpus), plan_.seed, log) {}

std::int64_t SessionEngine::tick_for_ms(std::int64_t ts_ms) const { return ts_ms * tick_hz() / 1000; }

void SessionEngine::step(const std::vector<SequencedEvent>& events) {
  const std::int64_t now_tick = tick();
  for (const PlannedRound& round : plan_.rounds) {
    if (start_tick_of(round) == now_tick) sim_.start_round(round.spec, round.at_ms);
  }
  for (const SequencedEvent& e : events) {
    sim_.apply_event(e.event, tick_for_ms(e.event.ts_ms) < now_tick);
  }
  sim_.tick();
}

void SessionEngine::finish() {
  if (end_logged_) return;
  end_logged_ = true;
  sim_.log_session_end();
}

}  // namespace arsls
