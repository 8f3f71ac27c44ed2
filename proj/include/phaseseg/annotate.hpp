#pragma once

// Weak labels from timestamped operative notes: the fixed phase ontology,
// HH:MM:SS parsing, keyword matching, and expansion of phase boundaries
// into per-frame label timelines.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "phaseseg/accumulator.hpp"

namespace phaseseg {

class PhaseOntology {
 public:
  /// nasal, sphenoid, sellar, closure with the built-in keyword lexicon.
  static PhaseOntology pituitary();

  PhaseOntology(std::vector<std::string> names, std::vector<std::vector<std::string>> keywords);

  std::size_t size() const { return names_.size(); }
  const std::string& name(int phase) const { return names_.at(phase); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<std::string>& keywords(int phase) const { return keywords_.at(phase); }
  /// Index of a phase name (case-insensitive), or -1.
  int find(std::string_view name) const;

  /// Applies `phase: kw1, kw2` lines; each listed phase's keywords are
  /// replaced. Blank lines and lines starting with '#' are skipped.
  void apply_lexicon(std::istream& in);

  /// Phases whose keywords occur in `text` as whole words, case-insensitive.
  std::vector<int> match(std::string_view text) const;

 private:
  void validate() const;

  std::vector<std::string> names_;
  std::vector<std::vector<std::string>> keywords_;
};

struct NoteRecord {
  std::string timestamp;  ///< HH:MM:SS
  std::string text;
};

/// "HH:MM:SS" -> 3600 HH + 60 MM + SS. HH has one or more digits, MM and SS
/// exactly two, both below 60. Fractional seconds are rejected. ParseError
/// carries the offending character offset.
std::int64_t parse_timestamp(std::string_view s);

/// Canonical zero-padded HH:MM:SS.
std::string format_timestamp(std::int64_t seconds);

/// floor(seconds * fps).
std::int64_t seconds_to_frame(std::int64_t seconds, double fps);

struct PhaseMark {
  std::int64_t seconds = 0;
  int phase = 0;
  bool operator==(const PhaseMark&) const = default;
};

/// Matches each note against the ontology and returns the phase onsets in
/// time order. Notes without a phase keyword are ignored and repeated phases
/// keep their earliest timestamp. Throws ConflictError when one instant maps
/// to two phases and ValidationError listing every note that moves backwards
/// in the phase order.
std::vector<PhaseMark> extract_boundaries(std::span<const NoteRecord> notes,
                                          const PhaseOntology& ontology);

struct Boundary {
  std::int64_t frame = 0;
  int phase = 0;
  bool operator==(const Boundary&) const = default;
};

struct LabelTimeline {
  std::int64_t frames = 0;
  double fps = 1.0;
  std::vector<Boundary> boundaries;
  std::vector<std::uint8_t> ignore;  ///< 1 for frames excluded from loss and metrics

  /// Per-frame labels with kIgnoreLabel on ignored frames.
  PhaseTimeline labels() const;
};

/// Each boundary labels [frame_i, frame_{i+1}); the last phase runs to the
/// end and frames before the first boundary are ignored. Boundaries that land
/// on the same frame keep the later phase.
LabelTimeline build_timeline(std::span<const Boundary> boundaries, std::int64_t frames,
                             double fps = 1.0);

/// Converts second marks with seconds_to_frame, then builds the timeline.
LabelTimeline build_timeline(std::span<const PhaseMark> marks, std::int64_t frames, double fps);

/// Reads one JSON object {"t": "HH:MM:SS", "note": "..."} per line. Blank lines
/// are skipped. ParseError::position() is the 1-based line number.
std::vector<NoteRecord> read_notes(std::istream& in);

}  // namespace phaseseg
