#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "arsls/result.hpp"

namespace arsls {

/// NFC-composes, drops whitespace and punctuation (ASCII and CJK alike) and
/// lowercases cased scripts. Idempotent.
std::string normalize_verse(std::string_view text);

struct CorpusEntry {
  std::string normalized_text;
  std::string source_title;
  std::set<std::string> themes;
};

class VerseCorpus {
 public:
  /// Adds or merges an entry; `text` is normalized here. Returns false when
  /// the text normalizes to nothing.
  bool add(std::string_view text, std::string_view source_title, const std::set<std::string>& themes);

  const CorpusEntry* find(std::string_view normalized) const;
  const std::vector<CorpusEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<CorpusEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct CorpusError {
  std::size_t line_no = 0;  // 1-based
  std::string message;
};

/// Tab-separated `verse<TAB>source_title[<TAB>theme,theme...]`; `#` starts a
/// comment line; blank lines are skipped.
Result<VerseCorpus, CorpusError> load_corpus(std::string_view document);

// ---------------------------------------------------------------------------

struct KeywordMode {
  std::string keyword;
  friend bool operator==(const KeywordMode&, const KeywordMode&) = default;
};
struct ThemeMode {
  std::string tag;
  friend bool operator==(const ThemeMode&, const ThemeMode&) = default;
};
using RoundMode = std::variant<KeywordMode, ThemeMode>;

enum class WinEffect { PetalField, FireworkVolley };

std::string_view to_string(WinEffect e);
std::optional<WinEffect> win_effect_from_string(std::string_view s);

inline constexpr std::int64_t kDefaultRoundDurationMs = 300'000;
inline constexpr int kDefaultRoundThreshold = 20;
inline constexpr std::size_t kBoardVerses = 9;

struct RoundSpec {
  RoundMode mode = KeywordMode{"花"};
  std::int64_t duration_ms = kDefaultRoundDurationMs;
  int threshold = kDefaultRoundThreshold;
  WinEffect win_effect = WinEffect::PetalField;

  bool valid() const { return duration_ms > 0 && threshold >= 1; }
  /// "keyword:花" / "theme:hangzhou-jiangnan"
  std::string label() const;

  friend bool operator==(const RoundSpec&, const RoundSpec&) = default;
};

enum class Judgment { Accepted, Duplicate, NotInCorpus, KeywordMiss, ThemeMiss, NoActiveRound };

std::string_view to_string(Judgment j);

enum class RoundStatus { Running, Won, Lost };

std::string_view to_string(RoundStatus s);

struct BoardView {
  std::string keyword_or_theme;
  std::vector<std::string> last_nine;  // oldest first
  std::int64_t countdown_ms = 0;
  int combo = 0;
  std::size_t count = 0;
  int threshold = 0;
  RoundStatus status = RoundStatus::Running;

  friend bool operator==(const BoardView&, const BoardView&) = default;
};

/// One Fei Hua Ling round. Judgments are values; the round itself only moves
/// Running -> Won or Running -> Lost.
class VerseRound {
 public:
  VerseRound(RoundSpec spec, std::int64_t started_at_ms);

  const RoundSpec& spec() const { return spec_; }
  std::int64_t started_at_ms() const { return started_at_ms_; }
  RoundStatus status() const { return status_; }
  std::optional<std::int64_t> won_at_ms() const { return won_at_ms_; }
  bool running() const { return status_ == RoundStatus::Running; }
  /// Running and not yet past its deadline at `now_ms`.
  bool open_at(std::int64_t now_ms) const;

  const std::vector<std::string>& accepted() const { return accepted_; }
  int combo() const { return combo_; }

  Judgment submit(const VerseCorpus& corpus, std::string_view text, std::int64_t now_ms);
  /// Marks the round Lost once its deadline has passed. Returns true on that
  /// transition.
  bool tick(std::int64_t now_ms);
  std::int64_t countdown_ms(std::int64_t now_ms) const;
  BoardView board_view(std::int64_t now_ms) const;

 private:
  RoundSpec spec_;
  std::string normalized_keyword_;
  std::int64_t started_at_ms_;
  std::vector<std::string> accepted_;
  std::unordered_set<std::string> accepted_set_;
  int combo_ = 0;
  RoundStatus status_ = RoundStatus::Running;
  std::optional<std::int64_t> won_at_ms_;
};

enum class RoundError { RoundAlreadyActive, InvalidSpec };

/// Holds the current round, if any, and enforces one-round-at-a-time.
class VerseGame {
 public:
  Result<std::monostate, RoundError> start_round(const RoundSpec& spec, std::int64_t now_ms);

  struct Submission {
    Judgment judgment = Judgment::NoActiveRound;
    bool won = false;  // this submission completed the round
  };
  Submission submit(const VerseCorpus& corpus, std::string_view text, std::int64_t now_ms);

  /// Returns true when the current round transitioned to Lost.
  bool tick(std::int64_t now_ms);

  bool running() const { return round_ && round_->running(); }
  const std::optional<VerseRound>& round() const { return round_; }
  /// Every round started so far, oldest first (the current one last).
  std::vector<const VerseRound*> all_rounds() const;
  std::optional<BoardView> board_view(std::int64_t now_ms) const;

 private:
  std::optional<VerseRound> round_;
  std::vector<VerseRound> history_;
};

}  // namespace arsls
