#include "arsls/verse_game.hpp"

#include <unicode/normalizer2.h>
#include <unicode/locid.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <stdexcept>

#include "arsls/event_protocol.hpp"

namespace arsls {
namespace {

const icu::Normalizer2& nfc() {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* n = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status) || n == nullptr) throw std::runtime_error("ICU NFC normalizer unavailable");
  return *n;
}

bool drop_code_point(UChar32 c) {
  if (u_isUWhiteSpace(c) || u_isspace(c) || u_ispunct(c)) return true;
  // ASCII symbols count as punctuation too ($, +, <, =, >, ^, `, |, ~).
  return c < 0x80 && c > 0x20 && !u_isalnum(c);
}

icu::UnicodeString compose(const icu::UnicodeString& s) {
  UErrorCode status = U_ZERO_ERROR;
  icu::UnicodeString out = nfc().normalize(s, status);
  if (U_FAILURE(status)) return s;
  return out;
}

}  // namespace

std::string normalize_verse(std::string_view text) {
  const icu::UnicodeString composed =
      compose(icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size()))));
  icu::UnicodeString kept;
  for (int32_t i = 0; i < composed.length();) {
    const UChar32 c = composed.char32At(i);
    if (!drop_code_point(c)) kept.append(c);
    i += U16_LENGTH(c);
  }
  kept.toLower(icu::Locale::getRoot());
  std::string out;
  compose(kept).toUTF8String(out);
  return out;
}

bool VerseCorpus::add(std::string_view text, std::string_view source_title,
                      const std::set<std::string>& themes) {
  std::string norm = normalize_verse(text);
  if (norm.empty()) return false;
  if (const auto it = index_.find(norm); it != index_.end()) {
    entries_[it->second].themes.insert(themes.begin(), themes.end());
    return true;
  }
  index_.emplace(norm, entries_.size());
  entries_.push_back({std::move(norm), std::string(source_title), themes});
  return true;
}

const CorpusEntry* VerseCorpus::find(std::string_view normalized) const {
  const auto it = index_.find(std::string(normalized));
  return it == index_.end() ? nullptr : &entries_[it->second];
}

Result<VerseCorpus, CorpusError> load_corpus(std::string_view document) {
  VerseCorpus corpus;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < document.size()) {
    const auto eol = document.find('\n', pos);
    std::string_view line = document.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? document.size() : eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.remove_prefix(3);
    if (trim_ascii(line).empty() || line.front() == '#') continue;

    std::vector<std::string_view> fields;
    for (std::size_t start = 0;;) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    if (fields.size() < 2 || fields.size() > 3) {
      return CorpusError{line_no, "expected verse<TAB>source_title[<TAB>themes]"};
    }
    std::set<std::string> themes;
    if (fields.size() == 3) {
      std::string_view rest = fields[2];
      while (!rest.empty()) {
        const auto comma = rest.find(',');
        const std::string_view tag = trim_ascii(rest.substr(0, comma));
        if (!tag.empty()) themes.insert(ascii_lower(tag));
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
      }
    }
    if (!corpus.add(fields[0], trim_ascii(fields[1]), themes)) {
      return CorpusError{line_no, "verse is empty after normalization"};
    }
  }
  return corpus;
}

// ---------------------------------------------------------------------------

std::string_view to_string(WinEffect e) {
  return e == WinEffect::PetalField ? "petal_field" : "firework_volley";
}

std::optional<WinEffect> win_effect_from_string(std::string_view s) {
  if (s == "petal_field") return WinEffect::PetalField;
  if (s == "firework_volley") return WinEffect::FireworkVolley;
  return std::nullopt;
}

std::string RoundSpec::label() const {
  if (const auto* k = std::get_if<KeywordMode>(&mode)) return "keyword:" + k->keyword;
  return "theme:" + std::get<ThemeMode>(mode).tag;
}

std::string_view to_string(Judgment j) {
  switch (j) {
    case Judgment::Accepted: return "Accepted";
    case Judgment::Duplicate: return "Duplicate";
    case Judgment::NotInCorpus: return "NotInCorpus";
    case Judgment::KeywordMiss: return "KeywordMiss";
    case Judgment::ThemeMiss: return "ThemeMiss";
    case Judgment::NoActiveRound: return "NoActiveRound";
  }
  return "Unknown";
}

std::string_view to_string(RoundStatus s) {
  switch (s) {
    case RoundStatus::Running: return "Running";
    case RoundStatus::Won: return "Won";
    case RoundStatus::Lost: return "Lost";
  }
  return "Unknown";
}

VerseRound::VerseRound(RoundSpec spec, std::int64_t started_at_ms)
    : spec_(std::move(spec)), started_at_ms_(started_at_ms) {
  if (const auto* k = std::get_if<KeywordMode>(&spec_.mode)) normalized_keyword_ = normalize_verse(k->keyword);
}

bool VerseRound::open_at(std::int64_t now_ms) const {
  return status_ == RoundStatus::Running && now_ms - started_at_ms_ < spec_.duration_ms;
}

Judgment VerseRound::submit(const VerseCorpus& corpus, std::string_view text, std::int64_t now_ms) {
  if (!open_at(now_ms)) return Judgment::NoActiveRound;

  const std::string norm = normalize_verse(text);
  const CorpusEntry* entry = norm.empty() ? nullptr : corpus.find(norm);
  Judgment verdict = Judgment::Accepted;
  if (entry == nullptr) {
    verdict = Judgment::NotInCorpus;
  } else if (const auto* theme = std::get_if<ThemeMode>(&spec_.mode)) {
    if (!entry->themes.contains(theme->tag)) verdict = Judgment::ThemeMiss;
  } else if (norm.find(normalized_keyword_) == std::string::npos) {
    verdict = Judgment::KeywordMiss;
  }
  if (verdict == Judgment::Accepted && accepted_set_.contains(norm)) verdict = Judgment::Duplicate;

  if (verdict != Judgment::Accepted) {
    combo_ = 0;
    return verdict;
  }
  accepted_set_.insert(norm);
  accepted_.push_back(norm);
  ++combo_;
  if (accepted_.size() >= static_cast<std::size_t>(spec_.threshold)) {
    status_ = RoundStatus::Won;
    won_at_ms_ = now_ms;
  }
  return verdict;
}

bool VerseRound::tick(std::int64_t now_ms) {
  if (status_ != RoundStatus::Running) return false;
  if (now_ms - started_at_ms_ < spec_.duration_ms) return false;
  status_ = RoundStatus::Lost;
  return true;
}

std::int64_t VerseRound::countdown_ms(std::int64_t now_ms) const {
  switch (status_) {
    case RoundStatus::Won: return spec_.duration_ms - (*won_at_ms_ - started_at_ms_);
    case RoundStatus::Lost: return 0;
    case RoundStatus::Running: break;
  }
  return std::clamp<std::int64_t>(spec_.duration_ms - (now_ms - started_at_ms_), 0, spec_.duration_ms);
}

BoardView VerseRound::board_view(std::int64_t now_ms) const {
  BoardView view;
  view.keyword_or_theme = spec_.label();
  const std::size_t skip = accepted_.size() > kBoardVerses ? accepted_.size() - kBoardVerses : 0;
  view.last_nine.assign(accepted_.begin() + static_cast<std::ptrdiff_t>(skip), accepted_.end());
  view.countdown_ms = countdown_ms(now_ms);
  view.combo = combo_;
  view.count = accepted_.size();
  view.threshold = spec_.threshold;
  view.status = status_;
  return view;
}

Result<std::monostate, RoundError> VerseGame::start_round(const RoundSpec& spec, std::int64_t now_ms) {
  if (running()) return RoundError::RoundAlreadyActive;
  if (!spec.valid()) return RoundError::InvalidSpec;
  if (round_) history_.push_back(std::move(*round_));
  round_.emplace(spec, now_ms);
  return std::monostate{};
}

VerseGame::Submission VerseGame::submit(const VerseCorpus& corpus, std::string_view text, std::int64_t now_ms) {
  if (!round_) return {};
  const bool was_running = round_->running();
  Submission s;
  s.judgment = round_->submit(corpus, text, now_ms);
  s.won = was_running && round_->status() == RoundStatus::Won;
  return s;
}

std::vector<const VerseRound*> VerseGame::all_rounds() const {
  std::vector<const VerseRound*> out;
  for (const VerseRound& r : history_) out.push_back(&r);
  if (round_) out.push_back(&*round_);
  return out;
}

bool VerseGame::tick(std::int64_t now_ms) { return round_ && round_->tick(now_ms); }

std::optional<BoardView> VerseGame::board_view(std::int64_t now_ms) const {
  if (!round_) return std::nullopt;
  return round_->board_view(now_ms);
}

}  // namespace arsls
