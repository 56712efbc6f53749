#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "arsls/result.hpp"
#include "arsls/session.hpp"

namespace arsls {

struct ServerConfig {
  std::filesystem::path scene;
  std::filesystem::path corpus;
  std::optional<std::filesystem::path> plan;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> record;   // event log, one recorded line per applied event
  std::optional<std::filesystem::path> effects;  // effect log
  std::optional<std::filesystem::path> digest;   // final digest written here at session end

  std::string bind = "127.0.0.1";
  std::uint16_t http_port = 8080;  // 0 picks a free port
  std::uint16_t ingest_port = 9090;
  std::size_t ingest_queue = 4096;
  std::size_t client_buffer = 128;
  std::size_t max_line_bytes = 64 * 1024;
  int fanout_every = 1;  // ticks between broadcasts
  double speed = 1.0;    // simulated seconds per wall second; 0 runs unthrottled
};

/// Reads a JSON config. Relative paths resolve against the file's directory.
Result<ServerConfig, std::string> load_server_config(const std::filesystem::path& path);

struct ServerStats {
  std::int64_t tick = 0;
  std::int64_t events = 0;
  std::int64_t late_events = 0;
  std::int64_t decode_errors = 0;
  std::int64_t overloaded = 0;    // lines refused because the FIFO was full
  std::int64_t after_end = 0;     // lines received once the session had ended
  std::int64_t rejections = 0;
  std::int64_t clients = 0;
  std::int64_t clients_dropped = 0;
  std::int64_t updates_sent = 0;
  double max_tick_lag_ms = 0.0;   // worst wall-clock lateness of a tick start
  bool finished = false;
};

nlohmann::json stats_json(const ServerStats& s);

/// Live room: ingest over TCP lines, one sequencer thread driving a
/// SessionEngine at tick rate, HTTP endpoints and a WebSocket update stream.
class RoomServer {
 public:
  /// Binds both ports and starts the sequencer. Fails before accepting
  /// anything if inputs are invalid or a port is taken.
  static Result<std::unique_ptr<RoomServer>, std::string> start(const ServerConfig& config);
  static Result<std::unique_ptr<RoomServer>, std::string> start(const ServerConfig& config,
                                                                std::shared_ptr<const SceneConfig> scene,
                                                                std::shared_ptr<const VerseCorpus> corpus,
                                                                SessionPlan plan);
  ~RoomServer();
  RoomServer(const RoomServer&) = delete;
  RoomServer& operator=(const RoomServer&) = delete;

  std::uint16_t http_port() const;
  std::uint16_t ingest_port() const;

  /// Blocks until the session has run its full duration.
  void wait_finished();
  /// Stops networking and the sequencer; safe to call more than once.
  void stop();

  ServerStats stats() const;
  /// Events in the order they were applied, with their apply tick.
  std::vector<RecordedEvent> recording() const;
  /// Effect-log digest, available once the session has finished.
  std::optional<std::string> final_digest() const;

  struct Impl;

 private:
  explicit RoomServer(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

}  // namespace arsls
