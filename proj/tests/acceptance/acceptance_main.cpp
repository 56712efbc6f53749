// Acceptance suite: one PASS/FAIL line per criterion; exit status is the
// number of failures.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "arsls/compositor.hpp"
#include "arsls/replay.hpp"
#include "arsls/room_server.hpp"
#include "unit/net_client.hpp"
#include "unit/test_support.hpp"

namespace {

using namespace arsls;
using namespace std::chrono_literals;
using testing::sample_corpus;
using testing::sample_scene;
using testing::share;
using testing::small_scene;

struct Outcome {
  bool pass = false;
  std::string detail;
};

Outcome ok(std::string detail) { return {true, std::move(detail)}; }
Outcome bad(std::string detail) { return {false, std::move(detail)}; }

// ---------------------------------------------------------------------------

Outcome command_grammar() {
  const auto is = [](const Command& c, std::string_view name) { return command_name(c) == name; };
  if (!is(parse_command("release my lotus"), "ReleaseLotus")) return bad("release my lotus");
  if (!is(parse_command("dash my lotus"), "DashLotus")) return bad("dash my lotus");
  if (!is(parse_command("feed fish"), "FeedFish")) return bad("feed fish");
  const Command story = parse_command("crossing the bridge #MyStory with my sister");
  if (!is(story, "Story")) return bad("#MyStory comment");
  if (std::get<Story>(story).text.find("#MyStory") != std::string::npos) return bad("hashtag left in story text");
  for (const char* near : {"release my lotus please", "feed fishes", "dash  my lotus", "release-my-lotus"}) {
    if (!is(parse_command(near), "Plain")) return bad(std::string("near miss parsed as trigger: ") + near);
  }

  // 1000 fuzzed strings: random bytes and mutated triggers. Oracle for a
  // trigger: the trimmed, ASCII-folded text equals a phrase exactly, or the
  // text holds "#mystory" at a word end with something left after removal.
  std::mt19937_64 rng(1);
  const std::vector<std::string> seeds = {"release my lotus", "dash my lotus", "feed fish", "#MyStory hi", "花落知多少"};
  auto fold = [](std::string s) {
    for (char& c : s) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return s;
  };
  int triggers = 0;
  for (int i = 0; i < 1000; ++i) {
    std::string s;
    if (i % 2 == 0) {
      const std::size_t n = rng() % 40;
      for (std::size_t k = 0; k < n; ++k) s.push_back(static_cast<char>(rng() % 256));
    } else {
      s = seeds[rng() % seeds.size()];
      const int edits = static_cast<int>(rng() % 4);
      for (int e = 0; e < edits && !s.empty(); ++e) {
        const std::size_t at = rng() % s.size();
        switch (rng() % 4) {
          case 0: s.erase(at, 1); break;
          case 1: s.insert(at, 1, static_cast<char>(' ' + rng() % 95)); break;
          case 2: s[at] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[at]))); break;
          default: s = " \t" + s + " "; break;
        }
      }
    }
    const Command c = parse_command(s);
    const std::string trimmed = fold(std::string(trim_ascii(s)));
    bool expect_trigger = trimmed == "release my lotus" || trimmed == "dash my lotus" || trimmed == "feed fish";
    if (!expect_trigger) {
      std::string rest = fold(s);
      bool found = false;
      for (std::size_t p = rest.find("#mystory"); p != std::string::npos; p = rest.find("#mystory", p)) {
        const std::size_t end = p + 8;
        const bool boundary = end >= rest.size() || !(std::isalnum(static_cast<unsigned char>(rest[end])) || rest[end] == '_');
        if (boundary) {
          rest.erase(p, 8);
          found = true;
        } else {
          p = end;
        }
      }
      expect_trigger = found && !trim_ascii(rest).empty();
    }
    if (expect_trigger != !is(c, "Plain")) return bad("fuzz case " + std::to_string(i) + " misclassified");
    if (!expect_trigger && std::get<Plain>(c).text != s) return bad("Plain text altered");
    triggers += expect_trigger ? 1 : 0;
  }
  return ok("literal triggers parse; 1000 fuzzed strings, " + std::to_string(triggers) +
            " triggers, the rest Plain, no crash");
}

// ---------------------------------------------------------------------------

Outcome gift_tiers() {
  auto classify = [](std::int64_t cents) {
    EffectLog log;
    Simulation sim(share(small_scene()), share(VerseCorpus{}), 1, &log);
    sim.apply_gift("u", "u", Cny{cents});
    const bool firework = !sim.state().fireworks.empty();
    const bool token = sim.state().tokens_held("u") == 1;
    return std::pair{firework, token};
  };
  if (classify(999) != std::pair{true, false}) return bad("9.99 is not a firework");
  if (classify(1000) != std::pair{false, true}) return bad("10.00 is not an umbrella token");
  if (classify(0) != std::pair{false, false}) return bad("0 did something");
  const auto p999 = Cny::parse("9.99"), p10 = Cny::parse("10.00");
  if (!p999 || !p10 || p999->cents != 999 || p10->cents != 1000) return bad("amount parsing");

  // One simulation, 10k gifts from distinct users.
  EffectLog log(false);
  Simulation sim(share(small_scene()), share(VerseCorpus{}), 2, &log);
  std::mt19937_64 rng(2);
  std::int64_t fireworks = 0, tokens = 0;
  for (int i = 0; i < 10'000; ++i) {
    const std::int64_t cents = static_cast<std::int64_t>(rng() % 3000);
    const std::string user = "g" + std::to_string(i);
    const auto before = sim.state().counters.fireworks;
    sim.apply_gift(user, user, Cny{cents});
    const bool fired = sim.state().counters.fireworks == before + 1;
    const bool granted = sim.state().tokens_held(user) == 1;
    const bool want_token = cents >= 1000;
    const bool want_firework = cents > 0 && cents < 1000;
    if (fired != want_firework || granted != want_token) return bad("amount " + std::to_string(cents) + " misrouted");
    fireworks += fired;
    tokens += granted;
  }
  return ok("9.99->Firework, 10.00->UmbrellaToken, 0->nothing; 10000 random amounts split " +
            std::to_string(fireworks) + "/" + std::to_string(tokens) + " by >= 10.00");
}

// ---------------------------------------------------------------------------

Outcome verse_constants() {
  const RoundSpec spec;
  if (spec.duration_ms != 300'000) return bad("round duration");
  const SessionPlan plan = SessionPlan::defaults();
  if (plan.rounds.size() != 2 || plan.rounds[0].at_ms != 180'000 || plan.rounds[1].at_ms != 660'000) {
    return bad("default plan start times");
  }
  for (const PlannedRound& r : plan.rounds) {
    if (r.spec.duration_ms != 300'000) return bad("planned round duration");
  }

  // State machine: round closes exactly at 300 s; board keeps the last nine.
  VerseCorpus corpus;
  for (int i = 0; i < 15; ++i) corpus.add("花" + std::to_string(i), "t", {});
  VerseRound round(spec, 1000);
  for (int i = 0; i < 15; ++i) round.submit(corpus, "花" + std::to_string(i), 1000 + i);
  const BoardView b = round.board_view(2000);
  if (b.last_nine.size() != 9 || b.last_nine.front() != "花6" || b.last_nine.back() != "花14") return bad("board");
  if (round.submit(corpus, "花x", 1000 + 300'000) != Judgment::NoActiveRound) return bad("open at deadline");
  if (round.tick(1000 + 299'999) || !round.tick(1000 + 300'000)) return bad("deadline transition");

  EffectLog log(false);
  SessionEngine engine(share(sample_scene()), share(sample_corpus()), plan, &log);
  if (engine.start_tick_of(plan.rounds[0]) != 5400 || engine.start_tick_of(plan.rounds[1]) != 19'800) {
    return bad("round start ticks");
  }
  return ok("duration 300000 ms, board <= 9, rounds at 180 s and 660 s (ticks 5400 and 19800)");
}

// ---------------------------------------------------------------------------

// Independent normalizer for the script alphabet: drops ASCII whitespace and
// punctuation plus the CJK punctuation the scripts insert, folds ASCII case.
std::string oracle_normalize(const std::string& s) {
  static const std::vector<std::string> cjk = {"，", "。", "！", "？", "、", "；", "：", "　"};
  std::string out;
  for (std::size_t i = 0; i < s.size();) {
    bool skipped = false;
    for (const std::string& p : cjk) {
      if (s.compare(i, p.size(), p) == 0) {
        i += p.size();
        skipped = true;
        break;
      }
    }
    if (skipped) continue;
    const auto c = static_cast<unsigned char>(s[i]);
    if (c < 0x80 && (std::isspace(c) || std::ispunct(c))) {
      ++i;
      continue;
    }
    out.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    ++i;
  }
  return out;
}

Outcome verse_oracle() {
  // 50 hand-built lines: flower lines, moon lines, Jiangnan lines, a few Latin.
  const std::vector<std::pair<std::string, std::string>> lines = {
      {"感时花溅泪", "flower"}, {"恨别鸟惊心", "nostalgia"}, {"人面桃花相映红", "flower"},
      {"桃花依旧笑春风", "flower"}, {"化作春泥更护花", "flower"}, {"花落知多少", "flower"},
      {"夜来风雨声", "spring"}, {"桃花潭水深千尺", "flower"}, {"竹外桃花三两枝", "flower,jiangnan"},
      {"映日荷花别样红", "jiangnan,flower"}, {"接天莲叶无穷碧", "jiangnan"}, {"乱花渐欲迷人眼", "jiangnan,flower"},
      {"浅草才能没马蹄", "jiangnan"}, {"水光潋滟晴方好", "jiangnan"}, {"山色空蒙雨亦奇", "jiangnan"},
      {"欲把西湖比西子", "jiangnan"}, {"淡妆浓抹总相宜", "jiangnan"}, {"春风又绿江南岸", "jiangnan"},
      {"明月何时照我还", "moon,jiangnan"}, {"床前明月光", "moon"}, {"疑是地上霜", "moon"},
      {"举头望明月", "moon"}, {"低头思故乡", "moon,nostalgia"}, {"海上生明月", "moon"},
      {"天涯共此时", "moon"}, {"花间一壶酒", "flower,wine"}, {"独酌无相亲", "wine"},
      {"举杯邀明月", "moon,wine"}, {"对影成三人", "moon"}, {"江南好", "jiangnan"},
      {"风景旧曾谙", "jiangnan"}, {"日出江花红胜火", "jiangnan,flower"}, {"春来江水绿如蓝", "jiangnan"},
      {"能不忆江南", "jiangnan"}, {"落花时节又逢君", "flower"}, {"正是江南好风景", "jiangnan"},
      {"花开堪折直须折", "flower"}, {"莫待无花空折枝", "flower"}, {"停车坐爱枫林晚", "autumn"},
      {"霜叶红于二月花", "autumn,flower"}, {"梅须逊雪三分白", "snow"}, {"雪却输梅一段香", "snow"},
      {"忽如一夜春风来", "snow"}, {"千树万树梨花开", "snow,flower"}, {"无可奈何花落去", "flower"},
      {"似曾相识燕归来", "spring"}, {"Flower of Jiangnan", "flower,jiangnan"}, {"Moon over West Lake", "moon,jiangnan"},
      {"Lotus and flower", "flower"}, {"Rain on the lake", "jiangnan"}};
  VerseCorpus corpus;
  for (const auto& [text, themes] : lines) {
    std::set<std::string> tags;
    std::stringstream ss(themes);
    for (std::string t; std::getline(ss, t, ',');) tags.insert(t);
    corpus.add(text, "hand", tags);
  }
  if (corpus.size() != 50) return bad("corpus size " + std::to_string(corpus.size()));

  std::map<std::string, std::set<std::string>> oracle_corpus;
  for (const auto& [text, themes] : lines) {
    std::stringstream ss(themes);
    for (std::string t; std::getline(ss, t, ',');) oracle_corpus[oracle_normalize(text)].insert(t);
  }

  std::mt19937_64 rng(4);
  const std::vector<std::string> decorations = {"", "。", "，", "！", " ", "?", "  ..."};
  const std::vector<std::string> strangers = {"花非花", "雾非雾", "hello", "月下独酌", "Flower", ""};
  int wins = 0;
  for (int script = 0; script < 500; ++script) {
    RoundSpec spec;
    const bool theme = rng() % 2 == 0;
    if (theme) {
      spec.mode = ThemeMode{rng() % 2 ? "jiangnan" : "moon"};
    } else {
      spec.mode = KeywordMode{rng() % 2 ? "花" : "月"};
    }
    spec.threshold = 1 + static_cast<int>(rng() % 15);
    spec.duration_ms = 60'000;
    VerseRound round(spec, 0);

    std::set<std::string> accepted;
    int combo = 0;
    bool won = false;
    const int n = 10 + static_cast<int>(rng() % 40);
    std::int64_t t = 0;
    for (int k = 0; k < n; ++k) {
      t += static_cast<std::int64_t>(rng() % 3000);
      std::string text = rng() % 6 == 0 ? strangers[rng() % strangers.size()] : lines[rng() % lines.size()].first;
      if (rng() % 3 == 0) {
        for (char& c : text) {
          if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
        }
      }
      text = decorations[rng() % decorations.size()] + text + decorations[rng() % decorations.size()];
      const Judgment got = round.submit(corpus, text, t);

      const std::string norm = oracle_normalize(text);
      Judgment want;
      if (won || t >= spec.duration_ms) {
        want = Judgment::NoActiveRound;
      } else if (norm.empty() || !oracle_corpus.contains(norm)) {
        want = Judgment::NotInCorpus;
      } else if (theme && !oracle_corpus[norm].contains(std::get<ThemeMode>(spec.mode).tag)) {
        want = Judgment::ThemeMiss;
      } else if (!theme && norm.find(std::get<KeywordMode>(spec.mode).keyword) == std::string::npos) {
        want = Judgment::KeywordMiss;
      } else if (accepted.contains(norm)) {
        want = Judgment::Duplicate;
      } else {
        want = Judgment::Accepted;
      }
      if (got != want) {
        return bad("script " + std::to_string(script) + " step " + std::to_string(k) + ": got " +
                   std::string(to_string(got)) + " want " + std::string(to_string(want)));
      }
      if (want == Judgment::Accepted) {
        accepted.insert(norm);
        ++combo;
        won = static_cast<int>(accepted.size()) >= spec.threshold;
      } else if (want != Judgment::NoActiveRound) {
        combo = 0;
      }
      if (round.combo() != combo) return bad("combo mismatch in script " + std::to_string(script));
    }
    round.tick(spec.duration_ms);
    const RoundStatus want_status = won ? RoundStatus::Won : RoundStatus::Lost;
    if (round.status() != want_status) return bad("outcome mismatch in script " + std::to_string(script));
    if (std::set<std::string>(round.accepted().begin(), round.accepted().end()) != accepted) {
      return bad("accepted set mismatch in script " + std::to_string(script));
    }
    wins += won;
  }
  return ok("500 scripts over a 50-line corpus agree with the brute-force judge (" + std::to_string(wins) +
            " won, " + std::to_string(500 - wins) + " lost)");
}

// ---------------------------------------------------------------------------

std::vector<RecordedEvent> as_recorded(const std::vector<RoomEvent>& events) {
  std::vector<RecordedEvent> out;
  for (const RoomEvent& e : events) out.push_back({e, std::nullopt});
  return out;
}

Outcome determinism() {
  const auto scene = share(sample_scene());
  const auto corpus = share(sample_corpus());
  const SessionPlan plan = SessionPlan::defaults();

  auto sample = parse_event_log(testing::slurp(testing::data_path("sample.log")));
  if (!sample) return bad("sample.log: " + sample.error().message);
  if (replay(scene, corpus, plan, *sample).digest != replay(scene, corpus, plan, *sample).digest) {
    return bad("sample.log digests differ");
  }

  TrafficOptions options;
  options.seed = 7;
  options.events = 2000;
  const auto traffic = as_recorded(generate_traffic(options, *corpus, plan));
  const ReplayReport first = replay(scene, corpus, plan, traffic);
  const ReplayReport second = replay(scene, corpus, plan, traffic);
  if (first.digest != second.digest || first.state_digest != second.state_digest) return bad("traffic digests differ");
  const double slowest = std::max(first.wall_time_ms, second.wall_time_ms);
  if (slowest >= 5000.0) return bad("20-minute replay took " + std::to_string(slowest) + " ms");

  // Live session against its own recording.
  SessionPlan live_plan;
  live_plan.total_duration_ms = 40'000;
  RoundSpec spec;
  spec.duration_ms = 20'000;
  spec.threshold = 3;
  spec.win_effect = WinEffect::FireworkVolley;
  live_plan.rounds = {{2'000, spec}};
  ServerConfig config;
  config.http_port = 0;
  config.ingest_port = 0;
  config.speed = 8.0;
  auto server = RoomServer::start(config, scene, corpus, live_plan);
  if (!server) return bad("server: " + server.error());
  {
    TrafficOptions live_options;
    live_options.seed = 11;
    live_options.events = 120;
    live_options.duration_ms = 40'000;
    const auto events = generate_traffic(live_options, *corpus, live_plan);
    testing::LineClient a((*server)->ingest_port());
    testing::LineClient b((*server)->ingest_port());
    const auto started = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < events.size(); ++i) {
      // Pace sends around the simulated clock: two in three go out early,
      // the rest arrive late.
      const auto lead = i % 3 == 0 ? 0ms : 100ms;
      const auto due = started + std::chrono::milliseconds(events[i].ts_ms / 8) - lead;
      std::this_thread::sleep_until(due);
      (i % 2 ? a : b).request(encode_event(events[i]));
    }
  }
  (*server)->wait_finished();
  const auto live = (*server)->final_digest();
  const auto recorded = (*server)->recording();
  const std::int64_t late = (*server)->stats().late_events;
  (*server)->stop();
  if (!live) return bad("live session produced no digest");
  const ReplayReport again = replay(scene, corpus, live_plan, recorded);
  if (again.digest != *live) return bad("live digest != replay digest");

  char timing[64];
  std::snprintf(timing, sizeof timing, "%.0f", slowest);
  return ok("equal digests on repeat; 2000-event 20-minute log replays in " + std::string(timing) +
            " ms; live digest == replay digest (" + std::to_string(recorded.size()) + " events, " +
            std::to_string(late) + " late)");
}

// ---------------------------------------------------------------------------

Outcome lotus_and_token_invariants() {
  const auto scene = share(sample_scene());
  const auto corpus = share(sample_corpus());
  std::int64_t ticks_checked = 0;
  for (std::uint64_t run = 0; run < 100; ++run) {
    EffectLog log(false);
    Simulation sim(scene, corpus, run, &log);
    std::mt19937_64 rng(1000 + run);
    std::map<std::string, std::int64_t> grants, spawned;
    std::set<EntityId> seen_umbrellas;
    for (int tick = 0; tick < 5 * 60 * 30; ++tick) {
      if (rng() % 6 == 0) {
        const std::string user = "u" + std::to_string(rng() % 12);
        const std::int64_t ts = sim.state().now_ms();
        switch (rng() % 8) {
          case 0:
          case 1: sim.apply_event(RoomEvent::chat(user, user, ts, "release my lotus")); break;
          case 2: sim.apply_event(RoomEvent::chat(user, user, ts, "dash my lotus")); break;
          case 3: sim.apply_event(RoomEvent::chat(user, user, ts, "feed fish")); break;
          case 4:
          case 5: {
            const std::int64_t cents = static_cast<std::int64_t>(rng() % 2000);
            if (cents >= 1000) ++grants[user];
            sim.apply_event(RoomEvent::gift(user, user, ts, Cny{cents}));
            break;
          }
          default: sim.apply_event(RoomEvent::chat(user, user, ts, "#MyStory hello")); break;
        }
      }
      sim.tick();
      const SimState& s = sim.state();
      std::map<std::string, int> per_owner;
      for (const Lotus& l : s.lotuses) {
        if (++per_owner[l.owner_id] > 1) return bad("two lotuses for " + l.owner_id);
      }
      for (const Umbrella& u : s.umbrellas) {
        if (seen_umbrellas.insert(u.id).second) ++spawned[u.owner_id];
      }
      for (const auto& [user, held] : s.tokens) {
        const std::int64_t expected = grants[user] - spawned[user];
        if (expected < 0 || static_cast<std::int64_t>(held.size()) != expected) {
          return bad("token count for " + user + " at tick " + std::to_string(s.tick));
        }
      }
      for (const auto& [user, n] : grants) {
        if (static_cast<std::int64_t>(s.tokens_held(user)) != n - spawned[user]) return bad("token linearity");
      }
      ++ticks_checked;
    }
  }
  return ok("100 five-minute runs, " + std::to_string(ticks_checked) + " ticks, 0 violations");
}

// ---------------------------------------------------------------------------

Outcome occlusion() {
  SceneConfig cfg = sample_scene();
  cfg.occluders.clear();
  const Polygon occluder_poly = {{500, 380}, {800, 380}, {800, 470}, {500, 470}};
  const double occluder_depth = -430.0;  // between the two lotuses
  Frame background = synthesize_background(cfg);

  auto lotus = [](EntityId id, Point p) {
    Lotus l;
    l.id = id;
    l.pos = p;
    l.base_y = p.y;
    return l;
  };
  const Lotus farther = lotus(1, {580, 410});  // depth -410
  const Lotus nearer = lotus(2, {720, 450});   // depth -450

  auto render = [&](const std::vector<Lotus>& lotuses, bool with_occluder) {
    SceneConfig c = cfg;
    if (with_occluder) c.occluders.push_back({occluder_poly, occluder_depth});
    SimState s;
    s.lotuses = lotuses;
    RenderList list = build_render_list(s, c);
    for (DrawCommand& d : list.commands) d.label.reset();
    return *rasterize(list, c, background);
  };
  const Frame far_alone = render({farther}, false);
  const Frame near_alone = render({nearer}, false);
  const Frame both_plain = render({farther, nearer}, false);
  const Frame both_occluded = render({farther, nearer}, true);

  auto differs = [](const Frame& a, const Frame& b, int x, int y) {
    return !std::equal(a.at(x, y), a.at(x, y) + 4, b.at(x, y));
  };
  std::int64_t far_px = 0, far_hidden = 0, near_px = 0, near_kept = 0;
  for (int y = 0; y < cfg.screen.height_px; ++y) {
    for (int x = 0; x < cfg.screen.width_px; ++x) {
      if (!point_in_polygon(occluder_poly, {x + 0.5, y + 0.5})) continue;
      const bool is_far = differs(far_alone, background, x, y);
      const bool is_near = differs(near_alone, background, x, y);
      if (is_far && !is_near) {
        ++far_px;
        far_hidden += !differs(both_occluded, background, x, y);
      }
      if (is_near) {
        ++near_px;
        near_kept += !differs(both_occluded, both_plain, x, y);
      }
    }
  }
  if (far_px == 0 || near_px == 0) return bad("scripted entities do not overlap the occluder");
  if (far_hidden != far_px) {
    return bad(std::to_string(far_px - far_hidden) + " of " + std::to_string(far_px) + " farther pixels visible");
  }
  if (near_kept != near_px) {
    return bad(std::to_string(near_px - near_kept) + " of " + std::to_string(near_px) + " nearer pixels lost");
  }
  return ok(std::to_string(far_px) + "/" + std::to_string(far_px) + " farther pixels show background, " +
            std::to_string(near_px) + "/" + std::to_string(near_px) + " nearer pixels preserved");
}

// ---------------------------------------------------------------------------

Outcome kinematics() {
  // Drift: 60 s on a lake wide enough to keep the lotus on screen.
  SceneConfig wide = small_scene();
  wide.screen.width_px = 2000;
  wide.water = {{0, 190}, {2000, 190}, {2000, 360}, {0, 360}};
  {
    EffectLog log(false);
    Simulation sim(share(wide), share(VerseCorpus{}), 3, &log);
    sim.apply_command("u", "u", ReleaseLotus{}, 0);
    const Point start = sim.state().lotuses.front().pos;
    double worst = 0.0;
    for (int k = 1; k <= 60 * 30; ++k) {
      sim.tick();
      const double expected = start.x + wide.tuning.lotus_drift_px_s * (k / 30.0);
      worst = std::max(worst, std::abs(sim.state().lotuses.front().pos.x - expected));
    }
    if (worst > 1e-6) return bad("drift error " + std::to_string(worst));
  }

  // Fish apex: sample the stepped simulation and the closed form.
  const SceneConfig cfg = small_scene();
  {
    EffectLog log(false);
    Simulation sim(share(cfg), share(VerseCorpus{}), 5, &log);
    sim.apply_command("u", "u", FeedFish{}, 0);
    const Fish fish = sim.state().fishes.front();
    double best_y = 1e18;
    double best_t = -1;
    for (int ms = 0; ms <= cfg.tuning.fish_jump_duration_ms; ++ms) {
      const double y = fish_position(fish, cfg.tuning, fish.started_at_ms + ms).y;
      if (y < best_y) {
        best_y = y;
        best_t = ms;
      }
    }
    if (best_t != cfg.tuning.fish_jump_duration_ms / 2.0) return bad("fish apex at " + std::to_string(best_t));
    for (int d = 1; d < 500; ++d) {
      const double a = fish_position(fish, cfg.tuning, fish.started_at_ms + 500 - d).y;
      const double b = fish_position(fish, cfg.tuning, fish.started_at_ms + 500 + d).y;
      if (std::abs(a - b) > 1e-9) return bad("fish arc asymmetric");
    }
  }

  // Ripples stay in water across randomized runs.
  std::int64_t ripples = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EffectLog log(false);
    Simulation sim(share(sample_scene()), share(sample_corpus()), seed, &log);
    std::mt19937_64 rng(seed);
    for (int k = 0; k < 30 * 90; ++k) {
      if (rng() % 15 == 0) sim.apply_command("u" + std::to_string(rng() % 10), "n", ReleaseLotus{}, 0);
      if (rng() % 20 == 0) sim.apply_command("u" + std::to_string(rng() % 10), "n", DashLotus{}, 0);
      sim.tick();
      for (const Ripple& r : sim.state().ripples) {
        if (!point_in_water(sim.scene(), r.center)) return bad("ripple outside water");
      }
    }
    ripples += sim.state().counters.ripples;
  }
  return ok("drift within 1e-6 px over 60 s; fish apex at 500 ms of 1000 ms; " + std::to_string(ripples) +
            " ripples all in water");
}

// ---------------------------------------------------------------------------

Outcome server_robustness() {
  SessionPlan plan;
  plan.total_duration_ms = 15'000;
  plan.rounds.clear();
  ServerConfig config;
  config.http_port = 0;
  config.ingest_port = 0;
  config.speed = 1.0;
  auto started = RoomServer::start(config, share(sample_scene()), share(sample_corpus()), plan);
  if (!started) return bad("server: " + started.error());
  std::unique_ptr<RoomServer> server = std::move(started).value();

  // Subscribers first: one that never reads, one that does.
  testing::WsClient stalled(server->http_port(), 2048);
  std::int64_t received = 0;
  bool monotone = true;
  std::thread reader_thread([&, port = server->http_port()] {
    testing::WsClient reader(port);
    std::int64_t last = -1;
    while (auto update = reader.read()) {
      const std::int64_t tick = (*update)["tick"].get<std::int64_t>();
      monotone = monotone && tick > last;
      last = tick;
      ++received;
    }
  });

  std::mutex mu;
  std::map<std::pair<std::string, std::int64_t>, std::uint64_t> seq_of;
  std::int64_t malformed_replies = 0;
  bool connection_lost = false;
  std::vector<std::thread> senders;
  for (int c = 0; c < 3; ++c) {
    senders.emplace_back([&, c, port = server->ingest_port()] {
      try {
        testing::LineClient client(port);
        std::mt19937_64 rng(static_cast<std::uint64_t>(c));
        for (int i = 0; i < 60; ++i) {
          if (i % 6 == 5) {
            const auto r = client.request("{not json");
            std::lock_guard lock(mu);
            malformed_replies += r["ok"] == false;
          }
          const std::string user = "c" + std::to_string(c) + "u" + std::to_string(i);
          // Release lotuses early to fatten updates; the rest interleave in ts.
          const std::int64_t ts = i < 50 ? 1'000 + static_cast<std::int64_t>(rng() % 2000) : 3'500 + i;
          const auto r = client.request(encode_event(RoomEvent::chat(user, user, ts, "release my lotus")));
          std::lock_guard lock(mu);
          if (r["ok"] != true) {
            connection_lost = true;
            return;
          }
          seq_of[{user, ts}] = r["seq"].get<std::uint64_t>();
        }
      } catch (const std::exception&) {
        std::lock_guard lock(mu);
        connection_lost = true;
      }
    });
  }
  for (std::thread& t : senders) t.join();
  server->wait_finished();
  reader_thread.join();
  const ServerStats stats = server->stats();
  const auto recorded = server->recording();
  server->stop();

  if (connection_lost) return bad("an ingest connection failed");
  if (malformed_replies != 30 || stats.decode_errors != 30) return bad("malformed lines not answered");
  if (recorded.size() != seq_of.size()) return bad("recorded " + std::to_string(recorded.size()) + " events");
  std::vector<std::pair<std::int64_t, std::uint64_t>> applied, expected;
  for (const RecordedEvent& r : recorded) applied.emplace_back(r.event.ts_ms, seq_of.at({r.event.user_id, r.event.ts_ms}));
  expected = applied;
  std::sort(expected.begin(), expected.end());
  if (applied != expected) return bad("applied order is not (ts_ms, arrival)");
  if (stats.clients_dropped < 1) return bad("stalled client was not dropped");
  if (!monotone || received == 0) return bad("reader saw non-increasing ticks or nothing");
  const double period = sample_scene().tuning.tick_ms();
  if (stats.max_tick_lag_ms > period) {
    return bad("tick loop lagged " + std::to_string(stats.max_tick_lag_ms) + " ms > " + std::to_string(period));
  }
  char lag[32];
  std::snprintf(lag, sizeof lag, "%.2f", stats.max_tick_lag_ms);
  return ok("180 events over 3 connections applied in (ts, arrival) order; 30 malformed lines answered, "
            "connections kept; stalled client dropped; reader got " + std::to_string(received) +
            " updates; worst tick lag " + lag + " ms");
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"command grammar fidelity", command_grammar},
      {"gift tier boundary", gift_tiers},
      {"verse round constants", verse_constants},
      {"verse-game oracle equivalence", verse_oracle},
      {"determinism", determinism},
      {"one-lotus invariant and token linearity", lotus_and_token_invariants},
      {"occlusion pixel test", occlusion},
      {"kinematics", kinematics},
      {"server robustness", server_robustness},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = bad(std::string("exception: ") + e.what());
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures;
}
