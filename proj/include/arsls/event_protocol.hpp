#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "arsls/result.hpp"

namespace arsls {

/// Money in fen (1/100 CNY). Gifts are settled amounts with two fraction digits.
struct Cny {
  std::int64_t cents = 0;

  static constexpr Cny from_cents(std::int64_t c) { return Cny{c}; }
  friend auto operator<=>(const Cny&, const Cny&) = default;
  std::string to_string() const;
  /// Parses "12", "12.5", "12.50". Rejects signs other than a leading '-',
  /// exponents and more than two fraction digits.
  static std::optional<Cny> parse(std::string_view s);
};

inline constexpr Cny kUmbrellaGiftThreshold = Cny::from_cents(1000);

enum class EventKind { Chat, Gift };

struct RoomEvent {
  EventKind kind = EventKind::Chat;
  std::string user_id;
  std::string display_name;
  std::int64_t ts_ms = 0;
  std::string text;  // Chat only
  Cny amount;        // Gift only

  static RoomEvent chat(std::string user_id, std::string name, std::int64_t ts, std::string text);
  static RoomEvent gift(std::string user_id, std::string name, std::int64_t ts, Cny amount);

  friend bool operator==(const RoomEvent&, const RoomEvent&) = default;
};

enum class DecodeError { Malformed, MissingField, BadTimestamp, NegativeAmount };

std::string_view to_string(DecodeError e);

/// Decodes one wire line (a JSON object). Unknown fields are ignored.
Result<RoomEvent, DecodeError> decode_event(std::string_view line);

/// Encodes an event as a single wire line without the trailing newline.
std::string encode_event(const RoomEvent& e);

// ---------------------------------------------------------------------------
// Command grammar

struct ReleaseLotus {
  friend bool operator==(const ReleaseLotus&, const ReleaseLotus&) = default;
};
struct DashLotus {
  friend bool operator==(const DashLotus&, const DashLotus&) = default;
};
struct FeedFish {
  friend bool operator==(const FeedFish&, const FeedFish&) = default;
};
struct Story {
  std::string text;
  friend bool operator==(const Story&, const Story&) = default;
};
struct Plain {
  std::string text;
  friend bool operator==(const Plain&, const Plain&) = default;
};

using Command = std::variant<ReleaseLotus, DashLotus, FeedFish, Story, Plain>;

std::string_view command_name(const Command& c);

enum class TriggerKind { ReleaseLotus, DashLotus, FeedFish };

/// Trigger phrases and story hashtags. Phrases must match the whole comment
/// after trimming, ignoring ASCII case; hashtags may appear anywhere.
class CommandTable {
 public:
  /// English phrases plus the #MyStory hashtag.
  static CommandTable defaults();

  void add_phrase(std::string_view phrase, TriggerKind kind);
  void add_hashtag(std::string_view tag);

  Command parse(std::string_view text) const;

  struct Phrase {
    std::string folded;
    TriggerKind kind;
  };
  const std::vector<Phrase>& phrases() const { return phrases_; }
  const std::vector<std::string>& hashtags() const { return hashtags_; }

 private:
  std::vector<Phrase> phrases_;
  std::vector<std::string> hashtags_;
};

/// parse_command with the default table.
Command parse_command(std::string_view text);

std::string_view trim_ascii(std::string_view s);
std::string ascii_lower(std::string_view s);

// ---------------------------------------------------------------------------
// Sequencing

/// An event stamped with its receive order.
struct SequencedEvent {
  RoomEvent event;
  std::uint64_t seq = 0;
};

/// Downstream delivery order: (ts_ms, arrival index).
bool delivery_before(const SequencedEvent& a, const SequencedEvent& b);
void sort_for_delivery(std::vector<SequencedEvent>& events);

}  // namespace arsls
