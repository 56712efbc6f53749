#pragma once

#include <cstdint>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace arsls {

/// Incremental SHA-256 (OpenSSL EVP underneath).
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256& other);
  Sha256& operator=(const Sha256& other);
  Sha256(Sha256&&) noexcept;
  Sha256& operator=(Sha256&&) noexcept;

  void update(std::string_view bytes);
  /// Hex digest of everything fed so far; the running state is untouched.
  std::string hex() const;

  static std::string of(std::string_view bytes);

 private:
  struct Ctx;
  std::unique_ptr<Ctx> ctx_;
};

/// One canonical effect record: {tick, kind, user_id?, ...data}.
struct EffectRecord {
  std::int64_t tick = 0;
  std::string kind;
  std::optional<std::string> user_id;
  nlohmann::json data = nlohmann::json::object();

  /// Canonical single-line JSON (keys sorted, no whitespace).
  std::string canonical() const;
};

/// Append-only effect log. The digest is SHA-256 over the canonical lines,
/// each terminated by '\n'.
class EffectLog {
 public:
  explicit EffectLog(bool retain = true) : retain_(retain) {}

  void append(EffectRecord record);
  void set_sink(std::ostream* sink) { sink_ = sink; }

  std::string digest() const { return hash_.hex(); }
  std::size_t size() const { return count_; }
  /// Retained canonical lines (empty when constructed with retain = false).
  const std::vector<std::string>& lines() const { return lines_; }

 private:
  bool retain_;
  std::ostream* sink_ = nullptr;
  Sha256 hash_;
  std::size_t count_ = 0;
  std::vector<std::string> lines_;
};

}  // namespace arsls
