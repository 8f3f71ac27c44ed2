#pragma once

// On-disk formats for feature sequences, label timelines and synthetic
// dataset directories.
//
// Feature file: CSV, one row per frame, d comma-separated reals, no header.
// Blank lines and lines starting with '#' are skipped.
// Label file: CSV with header `frame,phase_id`. Either one row per boundary
// (phase_id holds from that frame until the next row) or one row per frame
// (expanded; phase_id -1 marks an ignored frame).

#include <filesystem>
#include <string>
#include <vector>

#include "phaseseg/accumulator.hpp"
#include "phaseseg/annotate.hpp"
#include "phaseseg/seqcore.hpp"
#include "phaseseg/synthgen.hpp"

namespace phaseseg {

MatrixD read_features(const std::filesystem::path& path);
/// Values are written with 17 significant digits so doubles round-trip.
void write_features(const std::filesystem::path& path, const MatrixD& x);

/// Rows in file order.
struct LabelRow {
  std::int64_t frame = 0;
  int phase = 0;
};
std::vector<LabelRow> read_label_rows(const std::filesystem::path& path);

/// Reads either layout and returns a per-frame timeline of `frames` entries.
/// Frames before the first row are ignored (kIgnoreLabel). Pass frames < 0 to
/// use last row + 1.
PhaseTimeline read_labels(const std::filesystem::path& path, std::int64_t frames = -1);

void write_label_boundaries(const std::filesystem::path& path, std::span<const Boundary> rows);
void write_label_frames(const std::filesystem::path& path, std::span<const int> timeline);
/// Boundary rows derived from a per-frame timeline (ignored frames dropped;
/// only valid for timelines whose ignored frames form a prefix).
std::vector<Boundary> timeline_boundaries(std::span<const int> timeline);

struct DatasetEntry {
  std::string id;
  std::filesystem::path features;
  std::filesystem::path labels;
};

/// Layout: <root>/<split>/<id>.features.csv and <id>.labels.csv.
std::vector<DatasetEntry> list_split(const std::filesystem::path& root, const std::string& split);

void write_split(const std::filesystem::path& root, const std::string& split,
                 std::span<const SyntheticSequence> sequences, std::size_t first_index = 0);

}  // namespace phaseseg
