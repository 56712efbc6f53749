#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include "arsls/replay.hpp"
#include "arsls/room_server.hpp"

namespace {

using namespace arsls;

int fail(const std::string& message) {
  std::cerr << "arsls: " << message << '\n';
  return 1;
}

int run_replay(const ReplayFiles& files, const std::string& report_path) {
  auto report = replay_files(files);
  if (!report) return fail(report.error().message);
  const std::string text = report_json(*report).dump(2);
  if (report_path.empty()) {
    std::cout << text << '\n';
  } else {
    std::ofstream(report_path) << text << '\n';
    std::cout << report->digest << '\n';
  }
  return 0;
}

int run_diff(const std::string& a_path, const std::string& b_path) {
  auto a = read_file(a_path);
  if (!a) return fail(a.error().message);
  auto b = read_file(b_path);
  if (!b) return fail(b.error().message);
  const TraceDiff d = diff_traces(split_lines(*a), split_lines(*b));
  if (d.equal) {
    std::cout << "Equal\n";
    return 0;
  }
  std::cout << "first divergence at line " << d.line_no << '\n';
  for (const std::string& c : d.context) std::cout << "  " << c << '\n';
  std::cout << "- " << d.a.value_or("<end of file>") << '\n';
  std::cout << "+ " << d.b.value_or("<end of file>") << '\n';
  return 2;
}

int run_gen_log(const TrafficOptions& options, const std::string& corpus_path, const std::string& plan_path,
                const std::string& out) {
  auto corpus_text = read_file(corpus_path);
  if (!corpus_text) return fail(corpus_text.error().message);
  auto corpus = load_corpus(*corpus_text);
  if (!corpus) return fail(corpus_path + ": line " + std::to_string(corpus.error().line_no));
  SessionPlan plan = SessionPlan::defaults();
  if (!plan_path.empty()) {
    auto text = read_file(plan_path);
    if (!text) return fail(text.error().message);
    auto loaded = load_plan(*text);
    if (!loaded) return fail(loaded.error().message);
    plan = *loaded;
  }
  std::ofstream file;
  if (!out.empty()) file.open(out, std::ios::binary);
  std::ostream& sink = out.empty() ? std::cout : file;
  for (const RoomEvent& e : generate_traffic(options, *corpus, plan)) sink << encode_event(e) << '\n';
  return 0;
}

int run_background(const std::string& scene_path, const std::string& out) {
  auto text = read_file(scene_path);
  if (!text) return fail(text.error().message);
  auto scene = load_scene(*text);
  if (!scene) return fail(scene.error().to_string());
  std::ofstream(out, std::ios::binary) << encode_frame(synthesize_background(*scene));
  return 0;
}

std::atomic<bool> interrupted{false};

int run_serve(ServerConfig config) {
  auto server = RoomServer::start(config);
  if (!server) return fail(server.error());
  std::cerr << "http+ws on " << config.bind << ':' << (*server)->http_port() << ", ingest on " << config.bind << ':'
            << (*server)->ingest_port() << '\n';
  std::signal(SIGINT, [](int) { interrupted = true; });
  std::signal(SIGTERM, [](int) { interrupted = true; });
  std::thread watcher([&] {
    while (!interrupted && !(*server)->stats().finished) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    if (interrupted) (*server)->stop();
  });
  (*server)->wait_finished();
  interrupted = true;
  watcher.join();
  const ServerStats stats = (*server)->stats();
  std::cerr << stats_json(stats).dump() << '\n';
  if (const auto digest = (*server)->final_digest()) std::cout << *digest << '\n';
  (*server)->stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Live-streaming AR scene engine: replay, serve and inspect sessions"};
  app.require_subcommand(1);

  ReplayFiles files;
  std::string log, scene = "data/scene.json", corpus = "data/corpus.tsv", plan, frames, effects, report;
  std::uint64_t seed = 0;
  auto* replay = app.add_subcommand("replay", "Replay an event log deterministically");
  replay->add_option("--log", log, "Event log (one JSON event per line)")->required();
  replay->add_option("--scene", scene, "Scene config JSON");
  replay->add_option("--corpus", corpus, "Verse corpus TSV");
  replay->add_option("--plan", plan, "Session plan JSON");
  auto* seed_opt = replay->add_option("--seed", seed, "Override the plan's seed");
  replay->add_option("--frames", frames, "Write PNG frames to this directory");
  replay->add_option("--every", files.every, "Frame every K ticks")->check(CLI::PositiveNumber);
  replay->add_option("--report", report, "Write the JSON report here instead of stdout");
  replay->add_option("--effects", effects, "Write the effect log here");

  std::string diff_a, diff_b;
  auto* diff = app.add_subcommand("diff", "First divergent record of two effect logs");
  diff->add_option("a", diff_a)->required();
  diff->add_option("b", diff_b)->required();

  ServerConfig server;
  std::string config_path, record;
  std::uint64_t serve_seed = 0;
  int http_port = -1, ingest_port = -1;
  double speed = -1;
  auto* serve = app.add_subcommand("serve", "Run a live room");
  serve->add_option("--config", config_path, "Server config JSON");
  auto* serve_scene = serve->add_option("--scene", server.scene, "Scene config JSON");
  auto* serve_corpus = serve->add_option("--corpus", server.corpus, "Verse corpus TSV");
  serve->add_option("--plan", plan, "Session plan JSON");
  auto* serve_seed_opt = serve->add_option("--seed", serve_seed, "Override the plan's seed");
  serve->add_option("--record", record, "Record applied events here");
  serve->add_option("--effects", effects, "Write the effect log here");
  serve->add_option("--http-port", http_port, "HTTP/WebSocket port");
  serve->add_option("--ingest-port", ingest_port, "Ingest line-protocol port");
  serve->add_option("--speed", speed, "Simulated seconds per wall second (0 = unthrottled)");

  TrafficOptions traffic;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-log", "Generate synthetic room traffic (test scaffolding)");
  gen->add_option("--seed", traffic.seed);
  gen->add_option("--events", traffic.events);
  gen->add_option("--duration-ms", traffic.duration_ms);
  gen->add_option("--users", traffic.users);
  gen->add_option("--corpus", corpus);
  gen->add_option("--plan", plan);
  gen->add_option("--out", gen_out);

  std::string bg_out = "data/background.png";
  auto* background = app.add_subcommand("background", "Write the placeholder background PNG for a scene");
  background->add_option("--scene", scene);
  background->add_option("--out", bg_out);

  CLI11_PARSE(app, argc, argv);

  if (*replay) {
    files.log = log;
    files.scene = scene;
    files.corpus = corpus;
    if (!plan.empty()) files.plan = plan;
    if (*seed_opt) files.seed = seed;
    if (!frames.empty()) files.frames_dir = frames;
    if (!effects.empty()) files.effects_out = effects;
    return run_replay(files, report);
  }
  if (*diff) return run_diff(diff_a, diff_b);
  if (*gen) return run_gen_log(traffic, corpus, plan, gen_out);
  if (*background) return run_background(scene, bg_out);
  if (*serve) {
    ServerConfig config;
    if (!config_path.empty()) {
      auto loaded = load_server_config(config_path);
      if (!loaded) return fail(loaded.error());
      config = *loaded;
    }
    if (*serve_scene) config.scene = server.scene;
    if (*serve_corpus) config.corpus = server.corpus;
    if (config.scene.empty()) config.scene = "data/scene.json";
    if (config.corpus.empty()) config.corpus = "data/corpus.tsv";
    if (!plan.empty()) config.plan = plan;
    if (*serve_seed_opt) config.seed = serve_seed;
    if (!record.empty()) config.record = record;
    if (!config.record) config.record = "session-events.log";
    if (!effects.empty()) config.effects = effects;
    if (http_port >= 0) config.http_port = static_cast<std::uint16_t>(http_port);
    if (ingest_port >= 0) config.ingest_port = static_cast<std::uint16_t>(ingest_port);
    if (speed >= 0) config.speed = speed;
    return run_serve(config);
  }
  return 0;
}
