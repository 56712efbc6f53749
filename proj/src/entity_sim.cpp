#include "arsls/entity_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace arsls {

using nlohmann::json;

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;
constexpr int kMaxRejectionDraws = 100000;
constexpr int kParticleColors = 6;

json point_json(Point p) { return json::array({p.x, p.y}); }

bool fully_off_screen(Point p, double half_w, double half_h, const Screen& screen) {
  return p.x - half_w >= screen.width_px || p.x + half_w <= 0.0 || p.y - half_h >= screen.height_px ||
         p.y + half_h <= 0.0;
}

}  // namespace

const Lotus* SimState::lotus_of(std::string_view owner_id) const {
  const auto it = std::find_if(lotuses.begin(), lotuses.end(),
                               [&](const Lotus& l) { return l.owner_id == owner_id; });
  return it == lotuses.end() ? nullptr : &*it;
}

std::size_t SimState::tokens_held(std::string_view owner_id) const {
  const auto it = tokens.find(std::string(owner_id));
  return it == tokens.end() ? 0 : it->second.size();
}

double fish_phase(const Fish& fish, const TuningConstants& tuning, double now_ms) {
  const double s = (now_ms - fish.started_at_ms) / static_cast<double>(tuning.fish_jump_duration_ms);
  return std::clamp(s, 0.0, 1.0);
}

Point fish_position(const Fish& fish, const TuningConstants& tuning, double now_ms) {
  const double s = fish_phase(fish, tuning, now_ms);
  return {fish.food_pos.x + tuning.fish_jump_span_px * (s - 0.5),
          fish.food_pos.y - tuning.fish_jump_height_px * 4.0 * s * (1.0 - s)};
}

Point firework_position(const Firework& fw, const TuningConstants& tuning, double now_ms) {
  if (fw.phase == FireworkPhase::Exploding) return fw.apex;
  const double s = std::clamp((now_ms - fw.launched_at_ms) / static_cast<double>(tuning.firework_flight_ms), 0.0, 1.0);
  // Decelerating rise: fast off the launch line, easing into the apex.
  const double eased = 1.0 - (1.0 - s) * (1.0 - s);
  return fw.spawn + (fw.apex - fw.spawn) * eased;
}

Simulation::Simulation(std::shared_ptr<const SceneConfig> scene, std::shared_ptr<const VerseCorpus> corpus,
                       std::uint64_t seed, EffectLog* log)
    : scene_(std::move(scene)), corpus_(std::move(corpus)), log_(log) {
  state_.rng = SplitRng(seed);
  state_.tick_hz = scene_->tuning.tick_hz;
  if (!corpus_) corpus_ = std::make_shared<VerseCorpus>();
}

void Simulation::log(std::string kind, std::optional<std::string> user, json data) {
  if (log_ == nullptr) return;
  if (current_event_late_) data["late"] = true;
  log_->append(EffectRecord{state_.tick, std::move(kind), std::move(user), std::move(data)});
}

void Simulation::reject(const std::string& user_id, std::string_view action, std::string_view reason) {
  ++state_.counters.rejections[std::string(reason)];
  log("rejected", user_id, {{"action", action}, {"reason", reason}});
}

Point Simulation::sample_in(const Polygon& poly, RngStream& stream) const {
  const Box box = bounding_box(poly);
  for (int i = 0; i < kMaxRejectionDraws; ++i) {
    const Point p{stream.uniform(box.min_x, box.max_x), stream.uniform(box.min_y, box.max_y)};
    if (point_in_polygon(poly, p)) return p;
  }
  return poly.front();
}

Point Simulation::sample_firework_apex(Point spawn, RngStream& stream) const {
  const TuningConstants& t = scene_->tuning;
  const double rise = stream.uniform(t.firework_rise_min_px, t.firework_rise_max_px);
  const double drift = stream.uniform(-0.1, 0.1) * rise;
  const double min_y = 0.05 * scene_->screen.height_px;
  return {spawn.x + drift, std::max(spawn.y - rise, min_y)};
}

void Simulation::apply_event(const RoomEvent& event, bool late) {
  ++state_.counters.events;
  if (late) ++state_.counters.late_events;
  current_event_late_ = late;
  json ingest = {{"ts_ms", event.ts_ms}, {"event", event.kind == EventKind::Chat ? "chat" : "gift"}};
  log("ingest", event.user_id, std::move(ingest));
  if (event.kind == EventKind::Chat) {
    const std::int64_t judged_at = late ? std::max(event.ts_ms, state_.now_ms()) : event.ts_ms;
    apply_command(event.user_id, event.display_name, commands_.parse(event.text), judged_at);
  } else {
    apply_gift(event.user_id, event.display_name, event.amount);
  }
  current_event_late_ = false;
}

void Simulation::apply_command(const std::string& user_id, const std::string& user_name, const Command& command,
                               std::int64_t judged_at_ms) {
  ++state_.counters.commands[std::string(command_name(command))];
  const TuningConstants& t = scene_->tuning;
  const double now = state_.now_exact_ms();

  if (std::holds_alternative<ReleaseLotus>(command)) {
    if (state_.lotus_of(user_id) != nullptr) {
      reject(user_id, "ReleaseLotus", "AlreadyHasLotus");
      return;
    }
    RngStream& rng = state_.rng.stream("lotus.spawn");
    Lotus lotus;
    lotus.id = state_.next_id++;
    lotus.owner_id = user_id;
    lotus.owner_name = user_name;
    lotus.pos = sample_in(scene_->lotus_spawn, rng);
    lotus.base_y = lotus.pos.y;
    lotus.bob_phase = rng.uniform(0.0, kTau);
    lotus.pos.y = lotus.base_y + t.lotus_bob_amplitude_px * std::sin(lotus.bob_phase);
    lotus.vel = {t.lotus_drift_px_s, 0.0};
    lotus.born_ms = now;
    lotus.next_ripple_at_ms = now + static_cast<double>(t.ripple_period_ms);
    ++state_.counters.lotuses_spawned;
    log("lotus.spawn", user_id, {{"id", lotus.id}, {"name", user_name}, {"pos", point_json(lotus.pos)}});
    state_.lotuses.push_back(std::move(lotus));
    return;
  }

  if (std::holds_alternative<DashLotus>(command)) {
    auto it = std::find_if(state_.lotuses.begin(), state_.lotuses.end(),
                           [&](const Lotus& l) { return l.owner_id == user_id; });
    if (it == state_.lotuses.end()) {
      reject(user_id, "DashLotus", "NoLotus");
      return;
    }
    const double angle = state_.rng.stream("lotus.dash").uniform(0.0, kTau);
    const double speed = t.lotus_drift_px_s * t.lotus_dash_multiplier;
    it->vel = {speed * std::cos(angle), speed * std::sin(angle)};
    it->dash_until_ms = now + static_cast<double>(t.dash_duration_ms);
    log("lotus.dash", user_id, {{"id", it->id}, {"vel", point_json(it->vel)}});
    return;
  }

  if (std::holds_alternative<FeedFish>(command)) {
    Fish fish;
    fish.id = state_.next_id++;
    fish.owner_id = user_id;
    fish.owner_name = user_name;
    fish.food_pos = sample_in(scene_->water, state_.rng.stream("fish.food"));
    fish.look_id = static_cast<int>(state_.rng.stream("fish.look").below(static_cast<std::uint64_t>(t.fish_looks)));
    fish.started_at_ms = now;
    ++state_.counters.fish;
    log("fish.spawn", user_id,
        {{"id", fish.id}, {"food", point_json(fish.food_pos)}, {"look", fish.look_id}});
    log("fish.splash", user_id, {{"id", fish.id}, {"pos", point_json(fish_position(fish, t, now))}});
    state_.fishes.push_back(std::move(fish));
    return;
  }

  if (const auto* story = std::get_if<Story>(&command)) {
    auto tok = state_.tokens.find(user_id);
    if (tok == state_.tokens.end() || tok->second.empty()) {
      reject(user_id, "Story", "NoToken");
      return;
    }
    const UmbrellaToken token = tok->second.front();
    tok->second.pop_front();
    if (tok->second.empty()) state_.tokens.erase(tok);
    ++state_.counters.tokens_consumed;

    const Box water = bounding_box(scene_->water);
    const double half_w = t.umbrella_half_width_px;
    double lo = std::max(water.min_x, half_w);
    double hi = std::min(water.max_x, scene_->screen.width_px - half_w);
    if (lo > hi) lo = hi = scene_->screen.width_px / 2.0;
    Umbrella u;
    u.id = state_.next_id++;
    u.owner_id = user_id;
    u.owner_name = user_name;
    u.texture_id = token.texture_id;
    u.story = story->text;
    u.pos = {state_.rng.stream("umbrella.spawn").uniform(lo, hi), scene_->screen.height_px - t.umbrella_half_height_px};
    u.vel = {0.0, -t.umbrella_ascent_px_s};
    ++state_.counters.umbrellas;
    log("umbrella.spawn", user_id,
        {{"id", u.id}, {"name", user_name}, {"texture", u.texture_id}, {"story", u.story}, {"pos", point_json(u.pos)}});
    state_.umbrellas.push_back(std::move(u));
    return;
  }

  const auto& plain = std::get<Plain>(command);
  if (state_.verse.running()) {
    const VerseGame::Submission s = state_.verse.submit(*corpus_, plain.text, judged_at_ms);
    ++state_.counters.judgments[std::string(to_string(s.judgment))];
    log("verse.judgment", user_id,
        {{"result", to_string(s.judgment)}, {"verse", normalize_verse(plain.text)}, {"combo", state_.verse.round()->combo()}});
    if (s.won) {
      const VerseRound& round = *state_.verse.round();
      log("round.won", std::nullopt,
          {{"round", round.spec().label()}, {"at_ms", *round.won_at_ms()}, {"count", round.accepted().size()}});
      win_effect(round.spec().win_effect);
    }
    return;
  }
  log("chat", user_id, {{"name", user_name}, {"text", plain.text}});
}

void Simulation::apply_gift(const std::string& user_id, const std::string& user_name, Cny amount) {
  ++state_.counters.gifts;
  if (amount.cents <= 0) return;
  if (amount < kUmbrellaGiftThreshold) {
    RngStream& rng = state_.rng.stream("firework.spawn");
    const Point spawn = scene_->firework_spawn.at(rng.uniform01());
    launch_firework(user_id, user_name, spawn, sample_firework_apex(spawn, rng), state_.now_exact_ms());
    return;
  }
  UmbrellaToken token;
  token.owner_id = user_id;
  token.granted_at_ms = state_.now_exact_ms();
  token.texture_id =
      static_cast<int>(state_.rng.stream("umbrella.texture").below(static_cast<std::uint64_t>(scene_->tuning.umbrella_textures)));
  ++state_.counters.tokens_granted;
  log("token.grant", user_id, {{"amount_cny", amount.to_string()}, {"texture", token.texture_id}});
  state_.tokens[user_id].push_back(token);
}

void Simulation::launch_firework(std::string tipper_id, std::string tipper_name, Point spawn, Point apex,
                                 double at_ms) {
  Firework fw;
  fw.id = state_.next_id++;
  fw.tipper_id = std::move(tipper_id);
  fw.tipper_name = std::move(tipper_name);
  fw.spawn = spawn;
  fw.apex = apex;
  fw.launched_at_ms = at_ms;
  ++state_.counters.fireworks;
  log("firework.launch", fw.tipper_id,
      {{"id", fw.id}, {"name", fw.tipper_name}, {"spawn", point_json(spawn)}, {"apex", point_json(apex)}, {"at_ms", at_ms}});
  state_.fireworks.push_back(std::move(fw));
}

void Simulation::win_effect(WinEffect effect) {
  if (effect == WinEffect::PetalField) {
    const bool was_active = state_.petal_field;
    state_.petal_field = true;
    log("effect.petal_field", std::nullopt, {{"already_active", was_active}});
    return;
  }
  const TuningConstants& t = scene_->tuning;
  const double now = state_.now_exact_ms();
  RngStream& rng = state_.rng.stream("volley");
  const double stagger = static_cast<double>(t.volley_span_ms) / t.volley_count;
  log("effect.firework_volley", std::nullopt, {{"count", t.volley_count}, {"span_ms", t.volley_span_ms}});
  for (int i = 0; i < t.volley_count; ++i) {
    const Point spawn = scene_->firework_spawn.at(rng.uniform01());
    const Point apex = sample_firework_apex(spawn, rng);
    const double at = now + stagger * i;
    if (i == 0) {
      launch_firework(kEveryone, kEveryone, spawn, apex, at);
    } else {
      state_.pending_fireworks.push_back({at, spawn, apex});
    }
  }
}

bool Simulation::start_round(const RoundSpec& spec, std::int64_t started_at_ms) {
  const auto started = state_.verse.start_round(spec, started_at_ms);
  if (!started) {
    log("round.rejected", std::nullopt,
        {{"round", spec.label()},
         {"reason", started.error() == RoundError::RoundAlreadyActive ? "RoundAlreadyActive" : "InvalidSpec"}});
    return false;
  }
  log("round.start", std::nullopt,
      {{"round", spec.label()}, {"at_ms", started_at_ms}, {"duration_ms", spec.duration_ms},
       {"threshold", spec.threshold}, {"win_effect", to_string(spec.win_effect)}});
  return true;
}

void Simulation::step_lotuses(double t0, double t1) {
  const TuningConstants& t = scene_->tuning;
  for (auto it = state_.lotuses.begin(); it != state_.lotuses.end();) {
    Lotus& l = *it;
    double from = t0;
    if (l.dash_until_ms && *l.dash_until_ms <= t1) {
      // Dash ends inside this step: finish it, then resume the rightward drift.
      const double dash_s = std::max(0.0, *l.dash_until_ms - t0) / 1000.0;
      l.pos.x += l.vel.x * dash_s;
      l.base_y += l.vel.y * dash_s;
      from = std::max(t0, *l.dash_until_ms);
      l.dash_until_ms.reset();
      l.vel = {t.lotus_drift_px_s, 0.0};
    }
    const double dt_s = (t1 - from) / 1000.0;
    l.pos.x += l.vel.x * dt_s;
    l.base_y += l.vel.y * dt_s;
    l.pos.y = l.base_y + t.lotus_bob_amplitude_px *
                             std::sin(l.bob_phase + kTau * (t1 - l.born_ms) / static_cast<double>(t.lotus_bob_period_ms));

    if (fully_off_screen(l.pos, t.lotus_half_width_px, t.lotus_half_height_px, scene_->screen)) {
      ++state_.counters.lotuses_despawned;
      log("lotus.despawn", l.owner_id, {{"id", l.id}, {"pos", point_json(l.pos)}});
      it = state_.lotuses.erase(it);
      continue;
    }
    if (t1 >= l.next_ripple_at_ms) {
      if (point_in_water(*scene_, l.pos)) {
        Ripple r{state_.next_id++, l.pos, t1};
        ++state_.counters.ripples;
        log("ripple", l.owner_id, {{"id", r.id}, {"lotus", l.id}, {"center", point_json(r.center)}});
        state_.ripples.push_back(r);
      }
      while (l.next_ripple_at_ms <= t1) l.next_ripple_at_ms += static_cast<double>(t.ripple_period_ms);
    }
    ++it;
  }
}

void Simulation::step_fish(double t1) {
  const TuningConstants& t = scene_->tuning;
  for (auto it = state_.fishes.begin(); it != state_.fishes.end();) {
    if (t1 - it->started_at_ms >= static_cast<double>(t.fish_jump_duration_ms)) {
      log("fish.splash", it->owner_id, {{"id", it->id}, {"pos", point_json(fish_position(*it, t, t1))}});
      log("fish.despawn", it->owner_id, {{"id", it->id}});
      it = state_.fishes.erase(it);
    } else {
      ++it;
    }
  }
}

void Simulation::step_fireworks(double t1) {
  const TuningConstants& t = scene_->tuning;
  // Launch due volley members in schedule order.
  while (!state_.pending_fireworks.empty() && state_.pending_fireworks.front().launch_at_ms <= t1) {
    const PendingFirework p = state_.pending_fireworks.front();
    state_.pending_fireworks.erase(state_.pending_fireworks.begin());
    launch_firework(kEveryone, kEveryone, p.spawn, p.apex, p.launch_at_ms);
  }
  for (auto it = state_.fireworks.begin(); it != state_.fireworks.end();) {
    Firework& fw = *it;
    if (fw.phase == FireworkPhase::Ascending &&
        t1 - fw.launched_at_ms >= static_cast<double>(t.firework_flight_ms)) {
      RngStream& rng = state_.rng.stream("firework.burst");
      const auto count = t.firework_particles_min +
                         static_cast<int>(rng.below(static_cast<std::uint64_t>(t.firework_particles_max - t.firework_particles_min + 1)));
      fw.particles.clear();
      for (int i = 0; i < count; ++i) {
        fw.particles.push_back({rng.uniform(0.0, kTau), rng.uniform(40.0, 140.0),
                                static_cast<int>(rng.below(kParticleColors))});
      }
      fw.phase = FireworkPhase::Exploding;
      fw.exploded_at_ms = fw.launched_at_ms + static_cast<double>(t.firework_flight_ms);
      log("firework.explode", fw.tipper_id,
          {{"id", fw.id}, {"name", fw.tipper_name}, {"apex", point_json(fw.apex)}, {"particles", count}});
    }
    if (fw.phase == FireworkPhase::Exploding && t1 - fw.exploded_at_ms >= static_cast<double>(t.firework_burst_ms)) {
      log("firework.despawn", fw.tipper_id, {{"id", fw.id}});
      it = state_.fireworks.erase(it);
      continue;
    }
    ++it;
  }
}

void Simulation::step_umbrellas(double t0, double t1) {
  const TuningConstants& t = scene_->tuning;
  const double dt_s = (t1 - t0) / 1000.0;
  for (auto it = state_.umbrellas.begin(); it != state_.umbrellas.end();) {
    it->pos = it->pos + it->vel * dt_s;
    if (it->pos.y + t.umbrella_half_height_px <= 0.0) {
      log("umbrella.despawn", it->owner_id, {{"id", it->id}});
      it = state_.umbrellas.erase(it);
    } else {
      ++it;
    }
  }
}

void Simulation::step_ripples(double t1) {
  const auto lifetime = static_cast<double>(scene_->tuning.ripple_lifetime_ms);
  std::erase_if(state_.ripples, [&](const Ripple& r) { return t1 - r.born_at_ms >= lifetime; });
}

void Simulation::tick() {
  const double t0 = state_.now_exact_ms();
  const double t1 = static_cast<double>(state_.tick + 1) * 1000.0 / state_.tick_hz;
  step_ripples(t1);
  step_lotuses(t0, t1);
  step_fish(t1);
  step_fireworks(t1);
  step_umbrellas(t0, t1);
  ++state_.tick;
  if (state_.verse.tick(state_.now_ms())) {
    const VerseRound& round = *state_.verse.round();
    log("round.lost", std::nullopt, {{"round", round.spec().label()}, {"count", round.accepted().size()}});
  }
}

void Simulation::log_session_end() {
  const SimCounters& c = state_.counters;
  log("session.end", std::nullopt,
      {{"events", c.events}, {"fireworks", c.fireworks}, {"tokens_granted", c.tokens_granted},
       {"tokens_consumed", c.tokens_consumed}, {"lotuses_spawned", c.lotuses_spawned}, {"fish", c.fish},
       {"state_digest", state_digest()}});
}

std::string Simulation::state_digest() const {
  json j;
  j["tick"] = state_.tick;
  j["next_id"] = state_.next_id;
  j["petal_field"] = state_.petal_field;
  json lotuses = json::array();
  for (const Lotus& l : state_.lotuses) {
    lotuses.push_back({l.id, l.owner_id, l.pos.x, l.pos.y, l.vel.x, l.vel.y, l.dash_until_ms.value_or(-1.0),
                       l.next_ripple_at_ms});
  }
  j["lotuses"] = lotuses;
  json fishes = json::array();
  for (const Fish& f : state_.fishes) fishes.push_back({f.id, f.owner_id, f.food_pos.x, f.food_pos.y, f.look_id, f.started_at_ms});
  j["fishes"] = fishes;
  json fireworks = json::array();
  for (const Firework& f : state_.fireworks) {
    fireworks.push_back({f.id, f.tipper_id, f.spawn.x, f.spawn.y, f.apex.x, f.apex.y,
                         f.phase == FireworkPhase::Ascending ? 0 : 1, f.particles.size()});
  }
  j["fireworks"] = fireworks;
  j["pending_fireworks"] = state_.pending_fireworks.size();
  json umbrellas = json::array();
  for (const Umbrella& u : state_.umbrellas) umbrellas.push_back({u.id, u.owner_id, u.texture_id, u.story, u.pos.x, u.pos.y});
  j["umbrellas"] = umbrellas;
  json ripples = json::array();
  for (const Ripple& r : state_.ripples) ripples.push_back({r.id, r.center.x, r.center.y, r.born_at_ms});
  j["ripples"] = ripples;
  json tokens = json::object();
  for (const auto& [owner, queue] : state_.tokens) {
    json q = json::array();
    for (const UmbrellaToken& tk : queue) q.push_back({tk.texture_id, tk.granted_at_ms});
    tokens[owner] = q;
  }
  j["tokens"] = tokens;
  if (const auto& round = state_.verse.round()) {
    j["round"] = {{"label", round->spec().label()}, {"status", to_string(round->status())},
                  {"accepted", round->accepted()}, {"combo", round->combo()}};
  }
  return Sha256::of(j.dump());
}

}  // namespace arsls
