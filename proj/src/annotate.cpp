#include "phaseseg/annotate.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "phaseseg/losses.hpp"

namespace phaseseg {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

bool contains_word(std::string_view haystack, std::string_view word) {
  if (word.empty()) return false;
  std::size_t pos = haystack.find(word);
  while (pos != std::string_view::npos) {
    const bool left_ok = pos == 0 || !is_word_char(haystack[pos - 1]);
    const std::size_t end = pos + word.size();
    const bool right_ok = end >= haystack.size() || !is_word_char(haystack[end]);
    if (left_ok && right_ok) return true;
    pos = haystack.find(word, pos + 1);
  }
  return false;
}

}  // namespace

PhaseOntology PhaseOntology::pituitary() {
  return PhaseOntology({"nasal", "sphenoid", "sellar", "closure"},
                       {{"nasal", "turbinate", "septum", "septectomy"},
                        {"sphenoid", "sphenoidotomy", "ostium"},
                        {"sellar", "sella", "tumor", "tumour", "resection"},
                        {"closure", "flap", "reconstruction"}});
}

PhaseOntology::PhaseOntology(std::vector<std::string> names,
                             std::vector<std::vector<std::string>> keywords)
    : names_(std::move(names)), keywords_(std::move(keywords)) {
  for (auto& kws : keywords_) {
    for (auto& k : kws) k = lower(trim(k));
  }
  validate();
}

void PhaseOntology::validate() const {
  if (names_.empty()) throw ValidationError("ontology needs at least one phase");
  if (names_.size() != keywords_.size()) {
    throw ShapeError("ontology names and keyword lists differ in length");
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!seen.insert(lower(names_[i])).second) {
      throw ValidationError("duplicate phase name: " + names_[i]);
    }
    if (keywords_[i].empty()) throw ValidationError("phase " + names_[i] + " has no keywords");
    for (const auto& k : keywords_[i]) {
      if (k.empty()) throw ValidationError("phase " + names_[i] + " has an empty keyword");
    }
  }
}

int PhaseOntology::find(std::string_view name) const {
  const std::string key = lower(trim(name));
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (lower(names_[i]) == key) return static_cast<int>(i);
  }
  return -1;
}

void PhaseOntology::apply_lexicon(std::istream& in) {
  auto updated = keywords_;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto colon = text.find(':');
    if (colon == std::string::npos) {
      throw ParseError("lexicon line " + std::to_string(line_no) + ": expected 'phase: keywords'",
                       line_no);
    }
    const int phase = find(text.substr(0, colon));
    if (phase < 0) {
      throw ParseError("lexicon line " + std::to_string(line_no) + ": unknown phase '" +
                           trim(text.substr(0, colon)) + "'",
                       line_no);
    }
    std::vector<std::string> words;
    std::stringstream rest(text.substr(colon + 1));
    std::string word;
    while (std::getline(rest, word, ',')) {
      word = lower(trim(word));
      if (!word.empty()) words.push_back(word);
    }
    if (words.empty()) {
      throw ParseError("lexicon line " + std::to_string(line_no) + ": no keywords", line_no);
    }
    updated[phase] = std::move(words);
  }
  keywords_ = std::move(updated);
  validate();
}

std::vector<int> PhaseOntology::match(std::string_view text) const {
  const std::string hay = lower(text);
  std::vector<int> phases;
  for (std::size_t i = 0; i < keywords_.size(); ++i) {
    for (const auto& k : keywords_[i]) {
      if (contains_word(hay, k)) {
        phases.push_back(static_cast<int>(i));
        break;
      }
    }
  }
  return phases;
}

std::int64_t parse_timestamp(std::string_view s) {
  auto fail = [&](const std::string& why, std::size_t pos) -> std::int64_t {
    throw ParseError("invalid timestamp '" + std::string(s) + "' at position " +
                         std::to_string(pos) + ": " + why,
                     pos);
  };
  std::size_t pos = 0;
  auto digits = [&](std::size_t min_len, std::size_t max_len) -> std::int64_t {
    const std::size_t start = pos;
    std::int64_t v = 0;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos])) &&
           pos - start < max_len) {
      v = v * 10 + (s[pos] - '0');
      ++pos;
    }
    if (pos - start < min_len) fail("expected digit", pos);
    return v;
  };
  auto colon = [&] {
    if (pos >= s.size() || s[pos] != ':') fail("expected ':'", pos);
    ++pos;
  };
  const std::int64_t hours = digits(1, 9);
  colon();
  const std::size_t minute_pos = pos;
  const std::int64_t minutes = digits(2, 2);
  colon();
  const std::size_t second_pos = pos;
  const std::int64_t seconds = digits(2, 2);
  if (pos != s.size()) fail("unexpected trailing characters", pos);
  if (minutes >= 60) fail("minutes must be below 60", minute_pos);
  if (seconds >= 60) fail("seconds must be below 60", second_pos);
  return 3600 * hours + 60 * minutes + seconds;
}

std::string format_timestamp(std::int64_t seconds) {
  if (seconds < 0) throw ValidationError("negative timestamp");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02lld:%02lld:%02lld", static_cast<long long>(seconds / 3600),
                static_cast<long long>((seconds / 60) % 60), static_cast<long long>(seconds % 60));
  return buf;
}

std::int64_t seconds_to_frame(std::int64_t seconds, double fps) {
  if (!(fps > 0.0) || !std::isfinite(fps)) throw ValidationError("fps must be > 0");
  if (seconds < 0) throw ValidationError("negative time");
  return static_cast<std::int64_t>(std::floor(static_cast<double>(seconds) * fps));
}

std::vector<PhaseMark> extract_boundaries(std::span<const NoteRecord> notes,
                                          const PhaseOntology& ontology) {
  std::vector<PhaseMark> hits;
  for (const auto& note : notes) {
    const std::int64_t t = parse_timestamp(note.timestamp);
    for (int phase : ontology.match(note.text)) hits.push_back({t, phase});
  }
  std::sort(hits.begin(), hits.end(), [](const PhaseMark& a, const PhaseMark& b) {
    return a.seconds != b.seconds ? a.seconds < b.seconds : a.phase < b.phase;
  });
  hits.erase(std::unique(hits.begin(), hits.end()), hits.end());

  for (std::size_t i = 1; i < hits.size(); ++i) {
    if (hits[i].seconds == hits[i - 1].seconds) {
      throw ConflictError("conflicting phases at " + format_timestamp(hits[i].seconds) + ": " +
                          ontology.name(hits[i - 1].phase) + " and " +
                          ontology.name(hits[i].phase));
    }
  }

  std::vector<PhaseMark> marks;
  std::string offenders;
  for (const auto& h : hits) {
    if (!marks.empty() && h.phase == marks.back().phase) continue;
    if (!marks.empty() && h.phase < marks.back().phase) {
      if (!offenders.empty()) offenders += "; ";
      offenders += format_timestamp(h.seconds) + " " + ontology.name(h.phase) + " after " +
                   ontology.name(marks.back().phase);
      continue;
    }
    marks.push_back(h);
  }
  if (!offenders.empty()) {
    throw ValidationError("phase mentions out of order: " + offenders);
  }
  return marks;
}

PhaseTimeline LabelTimeline::labels() const {
  PhaseTimeline out(static_cast<std::size_t>(frames), kIgnoreLabel);
  for (std::size_t i = 0; i < boundaries.size(); ++i) {
    const std::int64_t end = i + 1 < boundaries.size() ? boundaries[i + 1].frame : frames;
    for (std::int64_t t = boundaries[i].frame; t < end; ++t) out[t] = boundaries[i].phase;
  }
  for (std::int64_t t = 0; t < frames && t < static_cast<std::int64_t>(ignore.size()); ++t) {
    if (ignore[t]) out[t] = kIgnoreLabel;
  }
  return out;
}

LabelTimeline build_timeline(std::span<const Boundary> boundaries, std::int64_t frames,
                             double fps) {
  if (frames < 1) throw ValidationError("timeline needs at least one frame");
  LabelTimeline tl;
  tl.frames = frames;
  tl.fps = fps;
  for (const auto& b : boundaries) {
    if (b.frame < 0 || b.frame >= frames) {
      throw ValidationError("boundary frame " + std::to_string(b.frame) + " outside [0, " +
                            std::to_string(frames) + ")");
    }
    if (b.phase < 0) throw ValidationError("negative phase id in boundary");
    if (!tl.boundaries.empty()) {
      const auto& prev = tl.boundaries.back();
      if (b.frame < prev.frame) throw ValidationError("boundaries must be sorted by frame");
      if (b.phase <= prev.phase) {
        throw ValidationError("boundary phases must strictly increase (phase " +
                              std::to_string(b.phase) + " at frame " + std::to_string(b.frame) +
                              ")");
      }
      if (b.frame == prev.frame) tl.boundaries.pop_back();
    }
    tl.boundaries.push_back(b);
  }
  tl.ignore.assign(static_cast<std::size_t>(frames), 0);
  const std::int64_t first = tl.boundaries.empty() ? frames : tl.boundaries.front().frame;
  std::fill(tl.ignore.begin(), tl.ignore.begin() + first, 1);
  return tl;
}

LabelTimeline build_timeline(std::span<const PhaseMark> marks, std::int64_t frames, double fps) {
  std::vector<Boundary> boundaries;
  boundaries.reserve(marks.size());
  for (const auto& m : marks) boundaries.push_back({seconds_to_frame(m.seconds, fps), m.phase});
  return build_timeline(boundaries, frames, fps);
}

std::vector<NoteRecord> read_notes(std::istream& in) {
  std::vector<NoteRecord> notes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fail = [&](const std::string& why) {
      throw ParseError("notes line " + std::to_string(line_no) + ": " + why, line_no);
    };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("malformed JSON (") + e.what() + ")");
    }
    if (!j.is_object() || !j.contains("t") || !j["t"].is_string() || !j.contains("note") ||
        !j["note"].is_string()) {
      fail("expected {\"t\": \"HH:MM:SS\", \"note\": \"...\"}");
    }
    NoteRecord rec{j["t"].get<std::string>(), j["note"].get<std::string>()};
    try {
      parse_timestamp(rec.timestamp);
    } catch (const ParseError& e) {
      fail(e.what());
    }
    notes.push_back(std::move(rec));
  }
  return notes;
}

}  // namespace phaseseg
