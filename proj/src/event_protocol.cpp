#include "arsls/event_protocol.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <nlohmann/json.hpp>

namespace arsls {

using nlohmann::json;

std::string Cny::to_string() const {
  const std::int64_t mag = cents < 0 ? -cents : cents;
  std::string out = cents < 0 ? "-" : "";
  out += std::to_string(mag / 100);
  out += '.';
  const auto frac = mag % 100;
  if (frac < 10) out += '0';
  out += std::to_string(frac);
  return out;
}

std::optional<Cny> Cny::parse(std::string_view s) {
  bool negative = false;
  if (!s.empty() && s.front() == '-') {
    negative = true;
    s.remove_prefix(1);
  }
  const auto dot = s.find('.');
  const std::string_view whole = s.substr(0, dot);
  const std::string_view frac = dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
  if (whole.empty() || frac.size() > 2 || (dot != std::string_view::npos && frac.empty())) {
    return std::nullopt;
  }
  auto all_digits = [](std::string_view v) {
    return std::all_of(v.begin(), v.end(), [](char c) { return c >= '0' && c <= '9'; });
  };
  if (!all_digits(whole) || !all_digits(frac) || whole.size() > 15) return std::nullopt;
  std::int64_t units = 0;
  std::from_chars(whole.data(), whole.data() + whole.size(), units);
  std::int64_t fen = 0;
  if (!frac.empty()) {
    std::from_chars(frac.data(), frac.data() + frac.size(), fen);
    if (frac.size() == 1) fen *= 10;
  }
  const std::int64_t total = units * 100 + fen;
  return Cny{negative ? -total : total};
}

RoomEvent RoomEvent::chat(std::string user_id, std::string name, std::int64_t ts, std::string text) {
  RoomEvent e;
  e.kind = EventKind::Chat;
  e.user_id = std::move(user_id);
  e.display_name = std::move(name);
  e.ts_ms = ts;
  e.text = std::move(text);
  return e;
}

RoomEvent RoomEvent::gift(std::string user_id, std::string name, std::int64_t ts, Cny amount) {
  RoomEvent e;
  e.kind = EventKind::Gift;
  e.user_id = std::move(user_id);
  e.display_name = std::move(name);
  e.ts_ms = ts;
  e.amount = amount;
  return e;
}

std::string_view to_string(DecodeError e) {
  switch (e) {
    case DecodeError::Malformed: return "Malformed";
    case DecodeError::MissingField: return "MissingField";
    case DecodeError::BadTimestamp: return "BadTimestamp";
    case DecodeError::NegativeAmount: return "NegativeAmount";
  }
  return "Unknown";
}

Result<RoomEvent, DecodeError> decode_event(std::string_view line) {
  json doc = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_object()) return DecodeError::Malformed;

  const auto kind_it = doc.find("kind");
  if (kind_it == doc.end()) return DecodeError::MissingField;
  if (!kind_it->is_string()) return DecodeError::Malformed;
  RoomEvent e;
  const auto& kind = kind_it->get_ref<const std::string&>();
  if (kind == "chat") {
    e.kind = EventKind::Chat;
  } else if (kind == "gift") {
    e.kind = EventKind::Gift;
  } else {
    return DecodeError::Malformed;
  }

  const auto ts_it = doc.find("ts_ms");
  if (ts_it == doc.end()) return DecodeError::MissingField;
  if (ts_it->is_number_unsigned()) {
    const auto v = ts_it->get<std::uint64_t>();
    if (v > static_cast<std::uint64_t>(INT64_MAX)) return DecodeError::BadTimestamp;
    e.ts_ms = static_cast<std::int64_t>(v);
  } else if (ts_it->is_number_integer()) {
    e.ts_ms = ts_it->get<std::int64_t>();
    if (e.ts_ms < 0) return DecodeError::BadTimestamp;
  } else {
    return DecodeError::BadTimestamp;
  }

  auto string_field = [&](const char* name, std::string& out) -> std::optional<DecodeError> {
    const auto it = doc.find(name);
    if (it == doc.end()) return DecodeError::MissingField;
    if (!it->is_string()) return DecodeError::Malformed;
    out = it->get<std::string>();
    return std::nullopt;
  };
  if (auto err = string_field("user_id", e.user_id)) return *err;
  if (e.user_id.empty()) return DecodeError::MissingField;
  if (auto err = string_field("display_name", e.display_name)) return *err;

  if (e.kind == EventKind::Chat) {
    if (auto err = string_field("text", e.text)) return *err;
    return e;
  }

  const auto amount_it = doc.find("amount_cny");
  if (amount_it == doc.end()) return DecodeError::MissingField;
  std::optional<Cny> amount;
  if (amount_it->is_string()) {
    amount = Cny::parse(amount_it->get_ref<const std::string&>());
  } else if (amount_it->is_number()) {
    // Tolerated for hand-written logs; rounded to whole fen.
    const double v = amount_it->get<double>();
    if (std::isfinite(v) && std::abs(v) < 1e13) amount = Cny{std::llround(v * 100.0)};
  }
  if (!amount) return DecodeError::Malformed;
  if (amount->cents < 0) return DecodeError::NegativeAmount;
  e.amount = *amount;
  return e;
}

std::string encode_event(const RoomEvent& e) {
  nlohmann::ordered_json j;
  j["kind"] = e.kind == EventKind::Chat ? "chat" : "gift";
  j["user_id"] = e.user_id;
  j["display_name"] = e.display_name;
  j["ts_ms"] = e.ts_ms;
  if (e.kind == EventKind::Chat) {
    j["text"] = e.text;
  } else {
    j["amount_cny"] = e.amount.to_string();
  }
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

// ---------------------------------------------------------------------------

std::string_view command_name(const Command& c) {
  static constexpr std::string_view names[] = {"ReleaseLotus", "DashLotus", "FeedFish", "Story",
                                               "Plain"};
  return names[c.index()];
}

std::string_view trim_ascii(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(ws);
  return s.substr(first, last - first + 1);
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
  });
  return out;
}

CommandTable CommandTable::defaults() {
  CommandTable t;
  t.add_phrase("release my lotus", TriggerKind::ReleaseLotus);
  t.add_phrase("dash my lotus", TriggerKind::DashLotus);
  t.add_phrase("feed fish", TriggerKind::FeedFish);
  t.add_hashtag("#MyStory");
  return t;
}

void CommandTable::add_phrase(std::string_view phrase, TriggerKind kind) {
  phrases_.push_back({ascii_lower(trim_ascii(phrase)), kind});
}

void CommandTable::add_hashtag(std::string_view tag) { hashtags_.push_back(ascii_lower(tag)); }

namespace {

bool is_tag_char(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

// Removes every occurrence of `tag` (already lowercased) that ends at a word
// boundary. Returns true if at least one occurrence was removed.
bool strip_hashtag(std::string& text, const std::string& tag) {
  bool found = false;
  std::size_t pos = 0;
  for (;;) {
    const std::string folded = ascii_lower(text);
    pos = folded.find(tag, pos);
    if (pos == std::string::npos) break;
    const std::size_t end = pos + tag.size();
    if (end < text.size() && is_tag_char(static_cast<unsigned char>(text[end]))) {
      pos = end;
      continue;
    }
    text.erase(pos, tag.size());
    found = true;
  }
  return found;
}

}  // namespace

Command CommandTable::parse(std::string_view text) const {
  const std::string folded = ascii_lower(trim_ascii(text));
  for (const Phrase& p : phrases_) {
    if (folded == p.folded) {
      switch (p.kind) {
        case TriggerKind::ReleaseLotus: return ReleaseLotus{};
        case TriggerKind::DashLotus: return DashLotus{};
        case TriggerKind::FeedFish: return FeedFish{};
      }
    }
  }
  for (const std::string& tag : hashtags_) {
    std::string story(text);
    if (strip_hashtag(story, tag)) {
      std::string_view body = trim_ascii(story);
      if (!body.empty()) return Story{std::string(body)};
    }
  }
  return Plain{std::string(text)};
}

Command parse_command(std::string_view text) {
  static const CommandTable table = CommandTable::defaults();
  return table.parse(text);
}

bool delivery_before(const SequencedEvent& a, const SequencedEvent& b) {
  if (a.event.ts_ms != b.event.ts_ms) return a.event.ts_ms < b.event.ts_ms;
  return a.seq < b.seq;
}

void sort_for_delivery(std::vector<SequencedEvent>& events) {
  std::stable_sort(events.begin(), events.end(), delivery_before);
}

}  // namespace arsls
