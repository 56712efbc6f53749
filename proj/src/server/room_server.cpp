#include "arsls/room_server.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "arsls/compositor.hpp"
#include "arsls/replay.hpp"

namespace arsls {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::json;

Result<ServerConfig, std::string> load_server_config(const std::filesystem::path& path) {
  auto text = read_file(path);
  if (!text) return text.error().message;
  const json doc = json::parse(*text, nullptr, false);
  if (!doc.is_object()) return path.string() + ": not a JSON object";
  const std::filesystem::path base = path.parent_path();
  const auto resolve = [&](const std::string& p) { const std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp; };
  ServerConfig c;
  try {
    if (doc.contains("scene")) c.scene = resolve(doc["scene"].get<std::string>());
    if (doc.contains("corpus")) c.corpus = resolve(doc["corpus"].get<std::string>());
    if (doc.contains("plan")) c.plan = resolve(doc["plan"].get<std::string>());
    if (doc.contains("record")) c.record = resolve(doc["record"].get<std::string>());
    if (doc.contains("effects")) c.effects = resolve(doc["effects"].get<std::string>());
    if (doc.contains("digest")) c.digest = resolve(doc["digest"].get<std::string>());
    if (doc.contains("seed")) c.seed = doc["seed"].get<std::uint64_t>();
    c.bind = doc.value("bind", c.bind);
    c.http_port = doc.value("http_port", c.http_port);
    c.ingest_port = doc.value("ingest_port", c.ingest_port);
    c.ingest_queue = doc.value("ingest_queue", c.ingest_queue);
    c.client_buffer = doc.value("client_buffer", c.client_buffer);
    c.max_line_bytes = doc.value("max_line_bytes", c.max_line_bytes);
    c.fanout_every = doc.value("fanout_every", c.fanout_every);
    c.speed = doc.value("speed", c.speed);
  } catch (const json::exception& e) {
    return path.string() + ": " + e.what();
  }
  if (c.fanout_every < 1) return path.string() + ": fanout_every must be >= 1";
  if (c.speed < 0) return path.string() + ": speed must be >= 0";
  if (c.ingest_queue == 0 || c.client_buffer == 0) return path.string() + ": queue sizes must be positive";
  return c;
}

json stats_json(const ServerStats& s) {
  return {{"tick", s.tick},
          {"events", s.events},
          {"late_events", s.late_events},
          {"decode_errors", s.decode_errors},
          {"overloaded", s.overloaded},
          {"after_end", s.after_end},
          {"rejections", s.rejections},
          {"clients", s.clients},
          {"clients_dropped", s.clients_dropped},
          {"updates_sent", s.updates_sent},
          {"max_tick_lag_ms", s.max_tick_lag_ms},
          {"finished", s.finished}};
}

namespace {

class WsSession;

std::string error_reply(std::string_view error) { return json{{"ok", false}, {"error", error}}.dump() + "\n"; }

}  // namespace

struct RoomServer::Impl {
  ServerConfig config;
  std::shared_ptr<const SceneConfig> scene;
  std::string scene_json;

  asio::io_context ioc{1};
  tcp::acceptor http_acceptor{ioc};
  tcp::acceptor ingest_acceptor{ioc};
  std::thread io_thread;
  std::thread sequencer;

  // ingest -> sequencer
  std::mutex queue_mu;
  std::deque<SequencedEvent> queue;
  std::uint64_t next_seq = 0;

  // io-thread only
  std::set<std::shared_ptr<WsSession>> clients;

  std::atomic<std::int64_t> decode_errors{0};
  std::atomic<std::int64_t> overloaded{0};
  std::atomic<std::int64_t> after_end{0};
  std::atomic<std::int64_t> client_count{0};
  std::atomic<std::int64_t> clients_dropped{0};
  std::atomic<std::int64_t> updates_sent{0};
  std::atomic<bool> finished{false};
  std::atomic<bool> stopping{false};

  // sequencer-owned, published under state_mu
  mutable std::mutex state_mu;
  std::condition_variable state_cv;
  ServerStats seq_stats;
  std::string board_json = "null";
  std::vector<RecordedEvent> recorded;
  std::optional<std::string> digest;

  EffectLog log{false};
  std::ostringstream tick_effects;
  std::ofstream record_file;
  std::ofstream effects_file;
  std::unique_ptr<SessionEngine> engine;

  std::string ingest_line(std::string_view line);
  ServerStats stats() const;
  void broadcast(std::shared_ptr<const std::string> update);
  void run_sequencer();
  void accept_http();
  void accept_ingest();
};

namespace {

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, RoomServer::Impl& impl) : ws_(std::move(socket)), impl_(impl) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->impl_.clients.insert(self);
      ++self->impl_.client_count;
      self->read();
    });
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    if (impl_.clients.erase(shared_from_this()) > 0) --impl_.client_count;
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().shutdown(tcp::socket::shutdown_both, ec);
    beast::get_lowest_layer(ws_).socket().close(ec);
  }

  void send(const std::shared_ptr<const std::string>& update) {
    if (closed_) return;
    if (queue_.size() >= impl_.config.client_buffer) {
      ++impl_.clients_dropped;
      close();
      return;
    }
    queue_.push_back(update);
    if (!writing_) write_next();
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->close();
      self->buffer_.consume(self->buffer_.size());
      self->read();
    });
  }

  void write_next() {
    writing_ = true;
    ws_.text(true);
    ws_.async_write(asio::buffer(*queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->close();
      ++self->impl_.updates_sent;
      self->queue_.pop_front();
      if (self->queue_.empty()) {
        self->writing_ = false;
      } else {
        self->write_next();
      }
    });
  }


  websocket::stream<beast::tcp_stream> ws_;
  RoomServer::Impl& impl_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  bool writing_ = false;
  bool closed_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, RoomServer::Impl& impl) : stream_(std::move(socket)), impl_(impl) {}

  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->shutdown();
      self->handle();
    });
  }

 private:
  void handle() {
    if (websocket::is_upgrade(req_) && req_.target() == "/stream") {
      stream_.expires_never();
      std::make_shared<WsSession>(stream_.release_socket(), impl_)->run(std::move(req_));
      return;
    }
    auto res = std::make_shared<http::response<http::string_body>>();
    res->version(req_.version());
    res->keep_alive(req_.keep_alive());
    res->set(http::field::content_type, "application/json");
    res->set(http::field::access_control_allow_origin, "*");
    const std::string target(req_.target());
    if (req_.method() != http::verb::get) {
      res->result(http::status::method_not_allowed);
      res->body() = R"({"error":"method not allowed"})";
    } else if (target == "/scene") {
      res->body() = impl_.scene_json;
    } else if (target == "/board") {
      std::lock_guard lock(impl_.state_mu);
      res->body() = impl_.board_json;
    } else if (target == "/health") {
      std::lock_guard lock(impl_.state_mu);
      res->body() = json{{"ok", true}, {"tick", impl_.seq_stats.tick}, {"finished", impl_.seq_stats.finished}}.dump();
    } else if (target == "/stats") {
      res->body() = stats_json(impl_.stats()).dump();
    } else {
      res->result(http::status::not_found);
      res->body() = R"({"error":"not found"})";
    }
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec || !res->keep_alive()) return self->shutdown();
      self->read();
    });
  }

  void shutdown() {
    beast::error_code ec;
    stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
  }

  beast::tcp_stream stream_;
  RoomServer::Impl& impl_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

class IngestSession : public std::enable_shared_from_this<IngestSession> {
 public:
  IngestSession(tcp::socket socket, RoomServer::Impl& impl) : socket_(std::move(socket)), impl_(impl) {}

  void read() {
    socket_.async_read_some(asio::buffer(chunk_), [self = shared_from_this()](beast::error_code ec, std::size_t n) {
      if (ec) return;
      self->consume(std::string_view(self->chunk_.data(), n));
      if (self->out_.empty()) return self->read();
      asio::async_write(self->socket_, asio::buffer(self->out_), [self](beast::error_code wec, std::size_t) {
        if (wec) return;
        self->out_.clear();
        self->read();
      });
    });
  }

 private:
  void consume(std::string_view data) {
    for (char ch : data) {
      if (ch != '\n') {
        if (discarding_) continue;
        if (pending_.size() >= impl_.config.max_line_bytes) {
          discarding_ = true;
          pending_.clear();
          ++impl_.decode_errors;
          out_ += error_reply("LineTooLong");
          continue;
        }
        pending_.push_back(ch);
        continue;
      }
      if (!discarding_) {
        std::string_view line = pending_;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!trim_ascii(line).empty()) out_ += impl_.ingest_line(line);
      }
      discarding_ = false;
      pending_.clear();
    }
  }

  tcp::socket socket_;
  RoomServer::Impl& impl_;
  std::array<char, 4096> chunk_{};
  std::string pending_;
  std::string out_;
  bool discarding_ = false;
};

}  // namespace

std::string RoomServer::Impl::ingest_line(std::string_view line) {
  if (finished) {
    ++after_end;
    return error_reply("SessionEnded");
  }
  auto event = decode_event(line);
  if (!event) {
    ++decode_errors;
    return error_reply(to_string(event.error()));
  }
  std::uint64_t seq = 0;
  {
    std::lock_guard lock(queue_mu);
    if (queue.size() >= config.ingest_queue) {
      ++overloaded;
      return error_reply("Overloaded");
    }
    seq = next_seq++;
    queue.push_back({std::move(event).value(), seq});
  }
  return json{{"ok", true}, {"seq", seq}}.dump() + "\n";
}

ServerStats RoomServer::Impl::stats() const {
  ServerStats s;
  {
    std::lock_guard lock(state_mu);
    s = seq_stats;
  }
  s.decode_errors = decode_errors;
  s.overloaded = overloaded;
  s.after_end = after_end;
  s.clients = client_count;
  s.clients_dropped = clients_dropped;
  s.updates_sent = updates_sent;
  return s;
}

void RoomServer::Impl::broadcast(std::shared_ptr<const std::string> update) {
  asio::post(ioc, [this, update = std::move(update)] {
    // send() may drop a client, which erases it from the set.
    const std::vector<std::shared_ptr<WsSession>> snapshot(clients.begin(), clients.end());
    for (const auto& c : snapshot) c->send(update);
  });
}

void RoomServer::Impl::accept_http() {
  http_acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (ec) return;
    std::make_shared<HttpSession>(std::move(socket), *this)->read();
    accept_http();
  });
}

void RoomServer::Impl::accept_ingest() {
  ingest_acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (ec) return;
    std::make_shared<IngestSession>(std::move(socket), *this)->read();
    accept_ingest();
  });
}

void RoomServer::Impl::run_sequencer() {
  using clock = std::chrono::steady_clock;
  const auto started = clock::now();
  const double tick_ms = scene->tuning.tick_ms();
  std::vector<SequencedEvent> held;
  std::vector<SequencedEvent> batch;
  double max_lag = 0.0;

  const auto drain_effects = [&](json* notices) {
    const std::string text = tick_effects.str();
    tick_effects.str({});
    if (text.empty()) return;
    if (effects_file.is_open()) effects_file << text;
    if (notices == nullptr) return;
    for (const std::string& line : split_lines(text)) {
      if (line.find("\"user_id\"") == std::string::npos || line.find("\"kind\":\"ingest\"") != std::string::npos) {
        continue;
      }
      notices->push_back(json::parse(line));
    }
  };

  while (!engine->finished() && !stopping) {
    const std::int64_t k = engine->tick();
    if (config.speed > 0) {
      const auto due = started + std::chrono::duration_cast<clock::duration>(
                                     std::chrono::duration<double, std::milli>(k * tick_ms / config.speed));
      {
        std::unique_lock lock(state_mu);
        state_cv.wait_until(lock, due, [&] { return stopping.load(); });
      }
      if (stopping) break;
      max_lag = std::max(max_lag, std::chrono::duration<double, std::milli>(clock::now() - due).count());
    }
    {
      std::lock_guard lock(queue_mu);
      for (SequencedEvent& e : queue) held.push_back(std::move(e));
      queue.clear();
    }
    batch.clear();
    auto split = std::stable_partition(held.begin(), held.end(),
                                       [&](const SequencedEvent& e) { return engine->tick_for_ms(e.event.ts_ms) <= k; });
    batch.assign(std::make_move_iterator(held.begin()), std::make_move_iterator(split));
    held.erase(held.begin(), split);
    sort_for_delivery(batch);

    engine->step(batch);

    const bool fan_out = client_count > 0 && engine->tick() % config.fanout_every == 0;
    json notices = json::array();
    drain_effects(fan_out ? &notices : nullptr);
    for (const SequencedEvent& e : batch) {
      if (record_file.is_open()) record_file << encode_recorded(e.event, k) << '\n';
    }

    const SimState& state = engine->sim().state();
    const auto board = state.verse.board_view(state.now_ms());
    json board_j = board ? board_view_json(*board) : json(nullptr);
    {
      std::lock_guard lock(state_mu);
      for (const SequencedEvent& e : batch) recorded.push_back({e.event, k});
      seq_stats.tick = state.tick;
      seq_stats.events = state.counters.events;
      seq_stats.late_events = state.counters.late_events;
      seq_stats.rejections = 0;
      for (const auto& [reason, n] : state.counters.rejections) seq_stats.rejections += n;
      seq_stats.max_tick_lag_ms = max_lag;
      board_json = board_j.dump();
    }
    if (fan_out) {
      json update = {{"tick", state.tick},
                     {"render_list", render_list_json(build_render_list(state, *scene))},
                     {"board_view", std::move(board_j)},
                     {"notices", std::move(notices)}};
      broadcast(std::make_shared<const std::string>(update.dump(-1, ' ', false, json::error_handler_t::replace)));
    }
  }

  if (engine->finished()) {
    engine->finish();
    drain_effects(nullptr);
    if (record_file.is_open()) record_file.flush();
    if (effects_file.is_open()) effects_file.flush();
    const std::string d = log.digest();
    if (config.digest) std::ofstream(*config.digest) << d << '\n';
    finished = true;
    asio::post(ioc, [this] {
      const std::vector<std::shared_ptr<WsSession>> snapshot(clients.begin(), clients.end());
      for (const auto& c : snapshot) c->close();
    });
    std::lock_guard lock(state_mu);
    digest = d;
    seq_stats.finished = true;
  }
  state_cv.notify_all();
}

RoomServer::RoomServer(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}

RoomServer::~RoomServer() { stop(); }

Result<std::unique_ptr<RoomServer>, std::string> RoomServer::start(const ServerConfig& config) {
  auto scene_text = read_file(config.scene);
  if (!scene_text) return scene_text.error().message;
  auto scene = load_scene(*scene_text);
  if (!scene) return config.scene.string() + ": " + scene.error().to_string();
  auto corpus_text = read_file(config.corpus);
  if (!corpus_text) return corpus_text.error().message;
  auto corpus = load_corpus(*corpus_text);
  if (!corpus) {
    return config.corpus.string() + ": line " + std::to_string(corpus.error().line_no) + ": " + corpus.error().message;
  }
  SessionPlan plan = SessionPlan::defaults();
  if (config.plan) {
    auto plan_text = read_file(*config.plan);
    if (!plan_text) return plan_text.error().message;
    auto loaded = load_plan(*plan_text);
    if (!loaded) return config.plan->string() + ": " + loaded.error().message;
    plan = std::move(loaded).value();
  }
  return start(config, std::make_shared<const SceneConfig>(std::move(scene).value()),
               std::make_shared<const VerseCorpus>(std::move(corpus).value()), std::move(plan));
}

Result<std::unique_ptr<RoomServer>, std::string> RoomServer::start(const ServerConfig& config,
                                                                   std::shared_ptr<const SceneConfig> scene,
                                                                   std::shared_ptr<const VerseCorpus> corpus,
                                                                   SessionPlan plan) {
  if (auto err = validate_plan(plan)) return "plan: " + err->message;
  if (config.seed) plan.seed = *config.seed;
  auto impl = std::make_unique<Impl>();
  impl->config = config;
  impl->config.fanout_every = std::max(1, config.fanout_every);
  impl->scene = scene;
  impl->scene_json = scene_to_json(*scene);

  if (config.record) {
    impl->record_file.open(*config.record, std::ios::binary | std::ios::trunc);
    if (!impl->record_file) return "cannot write " + config.record->string();
  }
  if (config.effects) {
    impl->effects_file.open(*config.effects, std::ios::binary | std::ios::trunc);
    if (!impl->effects_file) return "cannot write " + config.effects->string();
  }

  beast::error_code ec;
  const auto address = asio::ip::make_address(config.bind, ec);
  if (ec) return "bad bind address " + config.bind;
  const auto open = [&](tcp::acceptor& acceptor, std::uint16_t port, std::string_view what) -> std::optional<std::string> {
    const tcp::endpoint endpoint(address, port);
    acceptor.open(endpoint.protocol(), ec);
    if (!ec) acceptor.set_option(asio::socket_base::reuse_address(true), ec);
    if (!ec) acceptor.bind(endpoint, ec);
    if (!ec) acceptor.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) return std::string(what) + " port " + std::to_string(port) + ": " + ec.message();
    return std::nullopt;
  };
  if (auto err = open(impl->http_acceptor, config.http_port, "http")) return *err;
  if (auto err = open(impl->ingest_acceptor, config.ingest_port, "ingest")) return *err;

  impl->log.set_sink(&impl->tick_effects);
  impl->engine = std::make_unique<SessionEngine>(scene, std::move(corpus), std::move(plan), &impl->log);

  Impl* raw = impl.get();
  raw->accept_http();
  raw->accept_ingest();
  raw->io_thread = std::thread([raw] { raw->ioc.run(); });
  raw->sequencer = std::thread([raw] { raw->run_sequencer(); });
  return std::unique_ptr<RoomServer>(new RoomServer(std::move(impl)));
}

std::uint16_t RoomServer::http_port() const { return impl_->http_acceptor.local_endpoint().port(); }
std::uint16_t RoomServer::ingest_port() const { return impl_->ingest_acceptor.local_endpoint().port(); }

void RoomServer::wait_finished() {
  std::unique_lock lock(impl_->state_mu);
  impl_->state_cv.wait(lock, [&] { return impl_->seq_stats.finished || impl_->stopping; });
}

void RoomServer::stop() {
  if (!impl_) return;
  {
    std::lock_guard lock(impl_->state_mu);
    impl_->stopping = true;
  }
  impl_->state_cv.notify_all();
  if (impl_->sequencer.joinable()) impl_->sequencer.join();
  impl_->ioc.stop();
  if (impl_->io_thread.joinable()) impl_->io_thread.join();
}

ServerStats RoomServer::stats() const { return impl_->stats(); }

std::vector<RecordedEvent> RoomServer::recording() const {
  std::lock_guard lock(impl_->state_mu);
  return impl_->recorded;
}

std::optional<std::string> RoomServer::final_digest() const {
  std::lock_guard lock(impl_->state_mu);
  return impl_->digest;
}

}  // namespace arsls
