#include "arsls/replay.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "arsls/compositor.hpp"

namespace arsls {

using nlohmann::json;

std::vector<RoundOutcome> round_outcomes(const SimState& state) {
  std::vector<RoundOutcome> out;
  for (const VerseRound* r : state.verse.all_rounds()) {
    out.push_back({r->spec().label(), r->status(), r->accepted().size(), r->won_at_ms()});
  }
  return out;
}

json report_json(const ReplayReport& r) {
  const SimCounters& c = r.counters;
  json rounds = json::array();
  for (const RoundOutcome& o : r.rounds) {
    json j = {{"round", o.label}, {"outcome", to_string(o.status)}, {"accepted", o.accepted}};
    if (o.won_at_ms) j["won_at_ms"] = *o.won_at_ms;
    rounds.push_back(std::move(j));
  }
  return {{"digest", r.digest},
          {"state_digest", r.state_digest},
          {"ticks", r.ticks},
          {"effect_records", r.effect_records},
          {"events_after_end", r.events_after_end},
          {"frames_written", r.frames_written},
          {"wall_time_ms", r.wall_time_ms},
          {"rounds", rounds},
          {"counters",
           {{"events", c.events},
            {"late_events", c.late_events},
            {"commands", c.commands},
            {"judgments", c.judgments},
            {"rejections", c.rejections},
            {"gifts", c.gifts},
            {"fireworks", c.fireworks},
            {"tokens_granted", c.tokens_granted},
            {"tokens_consumed", c.tokens_consumed},
            {"lotuses_spawned", c.lotuses_spawned},
            {"lotuses_despawned", c.lotuses_despawned},
            {"fish", c.fish},
            {"umbrellas", c.umbrellas},
            {"ripples", c.ripples}}}};
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    if (eol == std::string_view::npos) break;
    pos = eol + 1;
  }
  return lines;
}

Result<std::vector<RecordedEvent>, ReplayError> parse_event_log(std::string_view text) {
  std::vector<RecordedEvent> events;
  const std::vector<std::string> lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim_ascii(lines[i]).empty()) continue;
    auto rec = decode_recorded(lines[i]);
    if (!rec) {
      return ReplayError{"line " + std::to_string(i + 1) + ": " + std::string(to_string(rec.error()))};
    }
    events.push_back(std::move(rec).value());
  }
  return events;
}

ReplayReport replay(const std::shared_ptr<const SceneConfig>& scene, const std::shared_ptr<const VerseCorpus>& corpus,
                    const SessionPlan& plan, const std::vector<RecordedEvent>& events, std::ostream* effect_sink,
                    const FrameDump* frames, EffectLog* log_out) {
  const auto started = std::chrono::steady_clock::now();
  EffectLog local_log(/*retain=*/false);
  EffectLog& log = log_out != nullptr ? *log_out : local_log;
  log.set_sink(effect_sink);
  SessionEngine engine(scene, corpus, plan, &log);

  struct Scheduled {
    std::int64_t tick;
    SequencedEvent event;
  };
  std::vector<Scheduled> schedule;
  schedule.reserve(events.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    const RecordedEvent& r = events[i];
    const std::int64_t due = std::max(engine.tick_for_ms(r.event.ts_ms), r.apply_tick.value_or(0));
    schedule.push_back({due, {r.event, i}});
  }
  std::stable_sort(schedule.begin(), schedule.end(), [](const Scheduled& a, const Scheduled& b) {
    if (a.tick != b.tick) return a.tick < b.tick;
    return delivery_before(a.event, b.event);
  });

  ReplayReport report;
  std::size_t next = 0;
  std::vector<SequencedEvent> batch;
  while (!engine.finished()) {
    batch.clear();
    while (next < schedule.size() && schedule[next].tick <= engine.tick()) batch.push_back(schedule[next++].event);
    engine.step(batch);
    if (frames != nullptr && engine.tick() % std::max(1, frames->every) == 0) {
      const RenderList list = build_render_list(engine.sim().state(), *scene);
      const auto frame = rasterize(list, *scene, frames->background);
      if (frame) {
        char name[32];
        std::snprintf(name, sizeof name, "%06lld.png", static_cast<long long>(engine.tick()));
        std::ofstream(frames->dir / name, std::ios::binary) << encode_frame(*frame);
        ++report.frames_written;
      }
    }
  }
  engine.finish();
  report.events_after_end = static_cast<std::int64_t>(schedule.size() - next);

  report.digest = log.digest();
  report.state_digest = engine.sim().state_digest();
  report.counters = engine.sim().state().counters;
  report.rounds = round_outcomes(engine.sim().state());
  report.ticks = engine.tick();
  report.effect_records = log.size();
  report.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  log.set_sink(nullptr);
  return report;
}

Result<std::string, ReplayError> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return ReplayError{"cannot open " + path.string()};
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

Result<ReplayReport, ReplayError> replay_files(const ReplayFiles& files) {
  auto scene_text = read_file(files.scene);
  if (!scene_text) return scene_text.error();
  auto scene = load_scene(*scene_text);
  if (!scene) return ReplayError{files.scene.string() + ": " + scene.error().to_string()};

  auto corpus_text = read_file(files.corpus);
  if (!corpus_text) return corpus_text.error();
  auto corpus = load_corpus(*corpus_text);
  if (!corpus) {
    return ReplayError{files.corpus.string() + ": line " + std::to_string(corpus.error().line_no) + ": " +
                       corpus.error().message};
  }

  SessionPlan plan = SessionPlan::defaults();
  if (files.plan) {
    auto plan_text = read_file(*files.plan);
    if (!plan_text) return plan_text.error();
    auto loaded = load_plan(*plan_text);
    if (!loaded) return ReplayError{files.plan->string() + ": " + loaded.error().message};
    plan = std::move(loaded).value();
  }
  if (files.seed) plan.seed = *files.seed;

  auto log_text = read_file(files.log);
  if (!log_text) return log_text.error();
  auto events = parse_event_log(*log_text);
  if (!events) return ReplayError{files.log.string() + ": " + events.error().message};

  auto shared_scene = std::make_shared<const SceneConfig>(std::move(scene).value());
  auto shared_corpus = std::make_shared<const VerseCorpus>(std::move(corpus).value());

  std::optional<FrameDump> frames;
  if (files.frames_dir) {
    std::error_code ec;
    std::filesystem::create_directories(*files.frames_dir, ec);
    if (ec) return ReplayError{"cannot create " + files.frames_dir->string() + ": " + ec.message()};
    auto background = load_background(*shared_scene, files.scene.parent_path());
    if (!background) return ReplayError{background.error().message};
    frames = FrameDump{*files.frames_dir, files.every, std::move(background).value()};
  }

  std::ofstream effects;
  if (files.effects_out) {
    effects.open(*files.effects_out, std::ios::binary);
    if (!effects) return ReplayError{"cannot write " + files.effects_out->string()};
  }
  return replay(shared_scene, shared_corpus, plan, *events, files.effects_out ? &effects : nullptr,
                frames ? &*frames : nullptr);
}

TraceDiff diff_traces(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  TraceDiff diff;
  const std::size_t n = std::min(a.size(), b.size());
  std::size_t i = 0;
  while (i < n && a[i] == b[i]) ++i;
  if (i == a.size() && i == b.size()) return diff;
  diff.equal = false;
  diff.line_no = i + 1;
  if (i < a.size()) diff.a = a[i];
  if (i < b.size()) diff.b = b[i];
  for (std::size_t k = i >= 3 ? i - 3 : 0; k < i; ++k) diff.context.push_back(a[k]);
  return diff;
}

// ---------------------------------------------------------------------------

namespace {

const char* const kChatter[] = {"nice view!", "好美", "hello from Shanghai", "the lake is so calm",
                                "666", "where is this?", "晚上好", "so relaxing"};
const char* const kStories[] = {"missing West Lake since 2019", "first date by the Broken Bridge",
                                "graduated today", "my grandmother's hometown"};

}  // namespace

std::vector<RoomEvent> generate_traffic(const TrafficOptions& options, const VerseCorpus& corpus,
                                        const SessionPlan& plan) {
  SplitRng rng(options.seed);
  RngStream& times = rng.stream("traffic.time");
  RngStream& pick = rng.stream("traffic.pick");
  std::vector<std::int64_t> stamps(options.events);
  for (auto& ts : stamps) ts = static_cast<std::int64_t>(times.below(static_cast<std::uint64_t>(options.duration_ms)));
  std::sort(stamps.begin(), stamps.end());

  auto round_at = [&](std::int64_t ts) -> const PlannedRound* {
    for (const PlannedRound& r : plan.rounds) {
      if (ts >= r.at_ms && ts < r.at_ms + r.spec.duration_ms) return &r;
    }
    return nullptr;
  };
  // Verse candidates per round, so attempts are mostly valid.
  auto candidates = [&](const PlannedRound& r) {
    std::vector<std::string> out;
    for (const CorpusEntry& e : corpus.entries()) {
      if (const auto* k = std::get_if<KeywordMode>(&r.spec.mode)) {
        if (e.normalized_text.find(normalize_verse(k->keyword)) != std::string::npos) out.push_back(e.normalized_text);
      } else if (e.themes.contains(std::get<ThemeMode>(r.spec.mode).tag)) {
        out.push_back(e.normalized_text);
      }
    }
    return out;
  };

  std::vector<RoomEvent> events;
  events.reserve(stamps.size());
  const std::size_t users = std::max<std::size_t>(1, options.users);
  for (std::int64_t ts : stamps) {
    const auto u = pick.below(users);
    const std::string id = "u" + std::to_string(u + 1);
    const std::string name = "viewer" + std::to_string(u + 1);
    const double roll = pick.uniform01();
    const PlannedRound* round = round_at(ts);
    if (round != nullptr && roll < 0.45) {
      const auto pool = candidates(*round);
      if (!pool.empty() && pick.uniform01() < 0.85) {
        events.push_back(RoomEvent::chat(id, name, ts, pool[pick.below(pool.size())] + "。"));
      } else {
        events.push_back(RoomEvent::chat(id, name, ts, "举头望明月"));
      }
      continue;
    }
    if (roll < 0.60) {
      events.push_back(RoomEvent::chat(id, name, ts, "release my lotus"));
    } else if (roll < 0.66) {
      events.push_back(RoomEvent::chat(id, name, ts, "dash my lotus"));
    } else if (roll < 0.76) {
      events.push_back(RoomEvent::chat(id, name, ts, "feed fish"));
    } else if (roll < 0.82) {
      static constexpr std::int64_t cheap[] = {100, 500, 990, 999};
      events.push_back(RoomEvent::gift(id, name, ts, Cny{cheap[pick.below(4)]}));
    } else if (roll < 0.85) {
      static constexpr std::int64_t dear[] = {1000, 5200};
      events.push_back(RoomEvent::gift(id, name, ts, Cny{dear[pick.below(2)]}));
    } else if (roll < 0.88) {
      events.push_back(RoomEvent::chat(id, name, ts, std::string("#MyStory ") + kStories[pick.below(4)]));
    } else {
      events.push_back(RoomEvent::chat(id, name, ts, kChatter[pick.below(8)]));
    }
  }
  return events;
}

}  // namespace arsls
