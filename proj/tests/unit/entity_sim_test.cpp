#include "arsls/entity_sim.hpp"

#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <random>

#include "unit/test_support.hpp"

namespace arsls {
namespace {

using testing::share;
using testing::small_scene;

std::size_t count_kind(const EffectLog& log, std::string_view kind) {
  const std::string needle = "\"kind\":\"" + std::string(kind) + "\"";
  return static_cast<std::size_t>(std::count_if(log.lines().begin(), log.lines().end(), [&](const std::string& l) {
    return l.find(needle) != std::string::npos;
  }));
}

struct Harness {
  explicit Harness(SceneConfig cfg = small_scene(), std::uint64_t seed = 42, VerseCorpus corpus = {})
      : scene(share(std::move(cfg))), sim(scene, share(std::move(corpus)), seed, &log) {}

  void chat(const std::string& user, const std::string& text) {
    sim.apply_event(RoomEvent::chat(user, user + "_name", sim.state().now_ms(), text));
  }
  void gift(const std::string& user, std::int64_t cents) {
    sim.apply_event(RoomEvent::gift(user, user + "_name", sim.state().now_ms(), Cny{cents}));
  }
  void ticks(int n) {
    for (int i = 0; i < n; ++i) sim.tick();
  }

  std::shared_ptr<const SceneConfig> scene;
  EffectLog log;
  Simulation sim;
};

TEST(SplitRng, SubstreamsAreIndependent) {
  SplitRng a(5), b(5);
  b.stream("other").next_u64();
  b.stream("other").next_u64();
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.stream("lotus.spawn").next_u64(), b.stream("lotus.spawn").next_u64());
  SplitRng c(6);
  EXPECT_NE(SplitRng(5).stream("x").next_u64(), c.stream("x").next_u64());
}

TEST(SplitRng, BelowStaysInRange) {
  RngStream s(1);
  for (int i = 0; i < 10000; ++i) ASSERT_LT(s.below(7), 7u);
  for (int i = 0; i < 10000; ++i) {
    const double u = s.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(ApplyCommand, SecondReleaseIsRejected) {
  Harness h;
  h.chat("u1", "release my lotus");
  h.chat("u1", "release my lotus");
  EXPECT_EQ(h.sim.state().lotuses.size(), 1u);
  EXPECT_EQ(h.sim.state().counters.rejections.at("AlreadyHasLotus"), 1);
  EXPECT_EQ(count_kind(h.log, "rejected"), 1u);
  const Lotus& l = h.sim.state().lotuses.front();
  EXPECT_EQ(l.owner_name, "u1_name");
  EXPECT_TRUE(point_in_polygon(h.scene->lotus_spawn, {l.pos.x, l.base_y}));
}

TEST(ApplyCommand, NewLotusAfterDriftingOffScreen) {
  Harness h;
  h.chat("u1", "release my lotus");
  // 640 px at 12 px/s: gone well within 60 s.
  h.ticks(60 * 30);
  EXPECT_EQ(h.sim.state().lotuses.size(), 0u);
  EXPECT_EQ(h.sim.state().counters.lotuses_despawned, 1);
  h.chat("u1", "release my lotus");
  EXPECT_EQ(h.sim.state().lotuses.size(), 1u);
  EXPECT_EQ(h.sim.state().counters.lotuses_spawned, 2);
}

TEST(ApplyCommand, StoryWithoutTokenIsRejected) {
  Harness h;
  h.chat("u2", "#MyStory hello lake");
  EXPECT_TRUE(h.sim.state().umbrellas.empty());
  EXPECT_EQ(h.sim.state().counters.rejections.at("NoToken"), 1);
}

TEST(ApplyCommand, DashWithoutLotusIsRejected) {
  Harness h;
  h.chat("u3", "dash my lotus");
  EXPECT_EQ(h.sim.state().counters.rejections.at("NoLotus"), 1);
}

TEST(ApplyCommand, DashMovesFastThenResumesDrift) {
  Harness h;
  h.chat("u1", "release my lotus");
  h.chat("u1", "dash my lotus");
  const Lotus& l = h.sim.state().lotuses.front();
  const TuningConstants& t = h.scene->tuning;
  EXPECT_NEAR(std::hypot(l.vel.x, l.vel.y), t.lotus_drift_px_s * t.lotus_dash_multiplier, 1e-9);
  ASSERT_TRUE(l.dash_until_ms);
  EXPECT_DOUBLE_EQ(*l.dash_until_ms, static_cast<double>(t.dash_duration_ms));
  h.ticks(46);  // 1533 ms > 1500 ms dash
  if (!h.sim.state().lotuses.empty()) {
    const Lotus& after = h.sim.state().lotuses.front();
    EXPECT_FALSE(after.dash_until_ms);
    EXPECT_EQ(after.vel, (Point{t.lotus_drift_px_s, 0.0}));
  }
}

TEST(ApplyCommand, FeedFishDropsFoodInWater) {
  Harness h;
  h.chat("u1", "feed fish");
  ASSERT_EQ(h.sim.state().fishes.size(), 1u);
  const Fish& f = h.sim.state().fishes.front();
  EXPECT_TRUE(point_in_water(*h.scene, f.food_pos));
  EXPECT_GE(f.look_id, 0);
  EXPECT_LT(f.look_id, h.scene->tuning.fish_looks);
}

TEST(ApplyCommand, PlainChatWithoutRoundIsJustChat) {
  Harness h;
  h.chat("u1", "nice view!");
  EXPECT_EQ(count_kind(h.log, "chat"), 1u);
  EXPECT_EQ(count_kind(h.log, "verse.judgment"), 0u);
}

TEST(ApplyGift, JustBelowTenIsFirework) {
  Harness h;
  h.gift("u1", 999);
  ASSERT_EQ(h.sim.state().fireworks.size(), 1u);
  EXPECT_EQ(h.sim.state().fireworks.front().tipper_name, "u1_name");
  EXPECT_EQ(h.sim.state().tokens_held("u1"), 0u);
}

TEST(ApplyGift, TenIsUmbrellaToken) {
  Harness h;
  h.gift("u1", 1000);
  EXPECT_TRUE(h.sim.state().fireworks.empty());
  EXPECT_EQ(h.sim.state().tokens_held("u1"), 1u);
}

TEST(ApplyGift, ZeroDoesNothing) {
  Harness h;
  h.gift("u1", 0);
  EXPECT_TRUE(h.sim.state().fireworks.empty());
  EXPECT_EQ(h.sim.state().tokens_held("u1"), 0u);
  EXPECT_EQ(h.log.size(), 1u);  // only the ingest record
}

TEST(ApplyGift, FireworkSpawnsOnFarEndSegment) {
  Harness h;
  for (int i = 0; i < 50; ++i) h.gift("u" + std::to_string(i), 100);
  const Segment seg = h.scene->firework_spawn;
  for (const Firework& fw : h.sim.state().fireworks) {
    EXPECT_TRUE(point_on_segment(seg.a, seg.b, fw.spawn, 1e-6));
    EXPECT_LT(fw.apex.y, fw.spawn.y);
  }
}

TEST(Umbrella, TokensArePerGiftAndConsumedOnce) {
  Harness h;
  h.gift("u1", 1000);
  h.gift("u1", 5200);
  h.chat("u1", "#MyStory first");
  h.chat("u1", "#MyStory second");
  h.chat("u1", "#MyStory third");
  EXPECT_EQ(h.sim.state().umbrellas.size(), 2u);
  EXPECT_EQ(h.sim.state().counters.tokens_granted, 2);
  EXPECT_EQ(h.sim.state().counters.tokens_consumed, 2);
  EXPECT_EQ(h.sim.state().counters.rejections.at("NoToken"), 1);
  const Umbrella& u = h.sim.state().umbrellas.front();
  EXPECT_EQ(u.story, "first");
  EXPECT_LT(u.vel.y, 0.0);
  EXPECT_GE(u.pos.y, h.scene->screen.height_px - h.scene->tuning.umbrella_half_height_px - 1e-9);
}

TEST(Umbrella, AscendsAndLeavesThroughTheTop) {
  Harness h;
  h.gift("u1", 1000);
  h.chat("u1", "#MyStory up we go");
  const double y0 = h.sim.state().umbrellas.front().pos.y;
  h.ticks(30);
  EXPECT_NEAR(h.sim.state().umbrellas.front().pos.y, y0 - 30.0, 1e-9);
  // 360 px at 30 px/s plus the sprite height.
  h.ticks(30 * 14);
  EXPECT_TRUE(h.sim.state().umbrellas.empty());
  EXPECT_EQ(count_kind(h.log, "umbrella.despawn"), 1u);
}

TEST(Tick, LotusLeavesRightEdgeAfterClosedFormTickCount) {
  SceneConfig cfg = small_scene();
  // Pin the spawn to x ~= width - 1.
  cfg.lotus_spawn = {{639.0, 300.0}, {639.0001, 300.0}, {639.0001, 300.0001}, {639.0, 300.0001}};
  Harness h(cfg);
  h.chat("u1", "release my lotus");
  const double x0 = h.sim.state().lotuses.front().pos.x;
  const double per_tick = cfg.tuning.lotus_drift_px_s / cfg.tuning.tick_hz;  // 0.4 px
  const int needed = static_cast<int>(std::ceil((1.0 + cfg.tuning.lotus_half_width_px) / per_tick));
  ASSERT_EQ(needed, 63);
  h.ticks(1);
  EXPECT_EQ(h.sim.state().lotuses.size(), 1u);
  h.ticks(needed - 2);
  ASSERT_EQ(h.sim.state().lotuses.size(), 1u);
  EXPECT_NEAR(h.sim.state().lotuses.front().pos.x, x0 + per_tick * (needed - 1), 1e-9);
  h.ticks(1);
  EXPECT_TRUE(h.sim.state().lotuses.empty());
}

TEST(Tick, SteppedDriftMatchesClosedForm) {
  SceneConfig cfg = small_scene();
  cfg.screen.width_px = 2000;
  cfg.water = {{0, 190}, {2000, 190}, {2000, 360}, {0, 360}};
  cfg.lotus_spawn = {{80, 260}, {120, 260}, {120, 300}, {80, 300}};
  Harness h(cfg);
  h.chat("u1", "release my lotus");
  const Lotus start = h.sim.state().lotuses.front();
  double worst = 0.0;
  for (int k = 1; k <= 60 * 30; ++k) {
    h.ticks(1);
    const Lotus& l = h.sim.state().lotuses.front();
    const double t_s = k / 30.0;
    worst = std::max(worst, std::abs(l.pos.x - (start.pos.x + cfg.tuning.lotus_drift_px_s * t_s)));
    ASSERT_EQ(l.base_y, start.base_y);
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(Tick, FishApexAtHalfDuration) {
  Harness h;
  h.chat("u1", "feed fish");
  const Fish fish = h.sim.state().fishes.front();
  const TuningConstants& t = h.scene->tuning;
  // Pure function: highest point (smallest y) at half the jump.
  const double half = static_cast<double>(t.fish_jump_duration_ms) / 2.0;
  const Point apex = fish_position(fish, t, fish.started_at_ms + half);
  EXPECT_DOUBLE_EQ(apex.x, fish.food_pos.x);
  EXPECT_DOUBLE_EQ(apex.y, fish.food_pos.y - t.fish_jump_height_px);
  for (int i = 0; i <= 1000; ++i) {
    const Point p = fish_position(fish, t, fish.started_at_ms + i);
    EXPECT_GE(p.y, apex.y);
  }
  // Symmetry of the arc about the midpoint.
  for (int d = 1; d < 500; d += 37) {
    const Point before = fish_position(fish, t, fish.started_at_ms + half - d);
    const Point after = fish_position(fish, t, fish.started_at_ms + half + d);
    EXPECT_NEAR(before.y, after.y, 1e-9);
  }
  // Stepped: lifetime is exactly the jump duration (30 ticks at 30 Hz).
  h.ticks(29);
  EXPECT_EQ(h.sim.state().fishes.size(), 1u);
  h.ticks(1);
  EXPECT_TRUE(h.sim.state().fishes.empty());
  EXPECT_EQ(count_kind(h.log, "fish.splash"), 2u);
}

TEST(Tick, EmptyStateOnlyAdvancesTime) {
  Harness h;
  const std::size_t records = h.log.size();
  h.ticks(10);
  const SimState& s = h.sim.state();
  EXPECT_EQ(s.tick, 10);
  EXPECT_TRUE(s.lotuses.empty() && s.fishes.empty() && s.fireworks.empty() && s.umbrellas.empty() && s.ripples.empty());
  EXPECT_EQ(h.log.size(), records);
  EXPECT_EQ(s.rng, SplitRng(42));
}

TEST(Tick, FireworkAscendsExplodesAndDespawns) {
  Harness h;
  h.gift("u1", 500);
  const TuningConstants& t = h.scene->tuning;
  const int flight_ticks = static_cast<int>(std::ceil(t.firework_flight_ms * t.tick_hz / 1000.0));
  h.ticks(flight_ticks - 1);
  EXPECT_EQ(h.sim.state().fireworks.front().phase, FireworkPhase::Ascending);
  h.ticks(1);
  ASSERT_EQ(h.sim.state().fireworks.front().phase, FireworkPhase::Exploding);
  const auto particles = h.sim.state().fireworks.front().particles.size();
  EXPECT_GE(particles, static_cast<std::size_t>(t.firework_particles_min));
  EXPECT_LE(particles, static_cast<std::size_t>(t.firework_particles_max));
  h.ticks(static_cast<int>(std::ceil(t.firework_burst_ms * t.tick_hz / 1000.0)));
  EXPECT_TRUE(h.sim.state().fireworks.empty());
}

TEST(Tick, RipplesStayInWaterAndExpire) {
  std::mt19937_64 rng(8);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Harness h(small_scene(), seed);
    for (int k = 0; k < 30 * 40; ++k) {
      if (rng() % 20 == 0) h.chat("u" + std::to_string(rng() % 6), "release my lotus");
      if (rng() % 25 == 0) h.chat("u" + std::to_string(rng() % 6), "dash my lotus");
      h.ticks(1);
      for (const Ripple& r : h.sim.state().ripples) {
        ASSERT_TRUE(point_in_water(*h.scene, r.center));
        ASSERT_LT(h.sim.state().now_exact_ms() - r.born_at_ms, h.scene->tuning.ripple_lifetime_ms + 1e-9);
      }
    }
    EXPECT_GT(h.sim.state().counters.ripples, 0);
  }
}

TEST(Tick, RippleCadenceFollowsPeriod) {
  Harness h;
  h.chat("u1", "release my lotus");
  h.ticks(30 * 8);  // 8 s -> one ripple every 800 ms
  EXPECT_EQ(h.sim.state().counters.ripples, 10);
}

TEST(WinEffect, PetalFieldPersists) {
  Harness h;
  h.sim.win_effect(WinEffect::PetalField);
  for (int i = 0; i < 3000; ++i) {
    h.ticks(1);
    ASSERT_TRUE(h.sim.state().petal_field);
  }
}

TEST(WinEffect, VolleyLaunchesEightFireworksWithinThreeSeconds) {
  Harness h;
  h.sim.win_effect(WinEffect::FireworkVolley);
  h.ticks(90);  // 3 s
  std::size_t launched_by_everyone = 0;
  for (const std::string& line : h.log.lines()) {
    if (line.find("\"kind\":\"firework.launch\"") != std::string::npos &&
        line.find("\"user_id\":\"everyone\"") != std::string::npos) {
      ++launched_by_everyone;
    }
  }
  EXPECT_EQ(launched_by_everyone, 8u);
  EXPECT_TRUE(h.sim.state().pending_fireworks.empty());
}

TEST(WinEffect, LostRoundHasNoEffect) {
  Harness h;
  RoundSpec spec;
  spec.duration_ms = 1000;
  spec.threshold = 5;
  ASSERT_TRUE(h.sim.start_round(spec, 0));
  h.ticks(40);
  EXPECT_EQ(h.sim.state().verse.round()->status(), RoundStatus::Lost);
  EXPECT_EQ(count_kind(h.log, "round.lost"), 1u);
  EXPECT_FALSE(h.sim.state().petal_field);
  EXPECT_TRUE(h.sim.state().fireworks.empty());
}

TEST(WinEffect, WinningSubmissionUnlocksEffect) {
  VerseCorpus corpus;
  corpus.add("花落知多少", "春晓", {});
  Harness h(small_scene(), 42, corpus);
  RoundSpec spec;
  spec.threshold = 1;
  ASSERT_TRUE(h.sim.start_round(spec, 0));
  h.chat("u1", "花落知多少？");
  EXPECT_EQ(count_kind(h.log, "round.won"), 1u);
  EXPECT_TRUE(h.sim.state().petal_field);
}

TEST(Determinism, SameSeedSameLogAndState) {
  auto run = [](std::uint64_t seed) {
    Harness h(small_scene(), seed);
    std::mt19937_64 script(99);
    for (int k = 0; k < 30 * 60; ++k) {
      const auto r = script() % 40;
      const std::string user = "u" + std::to_string(script() % 8);
      if (r == 0) h.chat(user, "release my lotus");
      if (r == 1) h.chat(user, "dash my lotus");
      if (r == 2) h.chat(user, "feed fish");
      if (r == 3) h.gift(user, static_cast<std::int64_t>(script() % 2000));
      if (r == 4) h.chat(user, "#MyStory hi");
      h.ticks(1);
    }
    return std::pair{h.log.digest(), h.sim.state_digest()};
  };
  EXPECT_EQ(run(42), run(42));
  EXPECT_NE(run(42).first, run(43).first);
}

TEST(Properties, FoodPositionsAreUniformOverWater) {
  Harness h;
  constexpr int kSamples = 10000;
  for (int i = 0; i < kSamples; ++i) h.sim.apply_command("u", "n", FeedFish{}, 0);
  const Box box = bounding_box(h.scene->water);
  // Cells of a 4x4 grid over the bounding box whose corners all lie in the
  // (convex) water polygon are entirely water.
  const double cw = box.width() / 4.0, ch = box.height() / 4.0;
  std::vector<int> wet_cells;
  for (int c = 0; c < 16; ++c) {
    const double x0 = box.min_x + (c % 4) * cw, y0 = box.min_y + (c / 4) * ch;
    if (point_in_water(*h.scene, {x0, y0}) && point_in_water(*h.scene, {x0 + cw, y0}) &&
        point_in_water(*h.scene, {x0, y0 + ch}) && point_in_water(*h.scene, {x0 + cw, y0 + ch})) {
      wet_cells.push_back(c);
    }
  }
  ASSERT_GE(wet_cells.size(), 8u);
  std::vector<double> observed(16, 0.0);
  for (const Fish& f : h.sim.state().fishes) {
    const int cx = std::min(3, static_cast<int>((f.food_pos.x - box.min_x) / cw));
    const int cy = std::min(3, static_cast<int>((f.food_pos.y - box.min_y) / ch));
    observed[static_cast<std::size_t>(cy * 4 + cx)] += 1.0;
  }
  double total = 0.0;
  for (int c : wet_cells) total += observed[static_cast<std::size_t>(c)];
  const double expected = total / static_cast<double>(wet_cells.size());
  double chi2 = 0.0;
  for (int c : wet_cells) chi2 += std::pow(observed[static_cast<std::size_t>(c)] - expected, 2) / expected;
  const boost::math::chi_squared dist(static_cast<double>(wet_cells.size() - 1));
  const double p = boost::math::cdf(boost::math::complement(dist, chi2));
  EXPECT_GT(p, 0.01) << "chi2=" << chi2;
}

}  // namespace
}  // namespace arsls
