#include "phaseseg/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "phaseseg/losses.hpp"

namespace phaseseg {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

template <typename T>
T parse_number(const std::string& cell, const fs::path& path, std::size_t line_no) {
  T v{};
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (cell.empty() || ec != std::errc() || ptr != last) {
    throw ParseError(path.string() + " line " + std::to_string(line_no) + ": bad number '" + cell +
                         "'",
                     line_no);
  }
  return v;
}

}  // namespace

MatrixD read_features(const fs::path& path) {
  auto in = open_in(path);
  std::vector<double> values;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto cells = split_commas(text);
    if (rows == 0) {
      cols = cells.size();
    } else if (cells.size() != cols) {
      throw ParseError(path.string() + " line " + std::to_string(line_no) + ": expected " +
                           std::to_string(cols) + " columns, found " +
                           std::to_string(cells.size()),
                       line_no);
    }
    for (const auto& c : cells) {
      const double v = parse_number<double>(c, path, line_no);
      if (!std::isfinite(v)) {
        throw ValidationError(path.string() + " line " + std::to_string(line_no) +
                              ": non-finite feature");
      }
      values.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw ValidationError(path.string() + ": no feature rows");
  MatrixD x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::copy(values.begin(), values.end(), x.data());
  return x;
}

void write_features(const fs::path& path, const MatrixD& x) {
  auto out = open_out(path);
  char buf[40];
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", x(t, k));
      if (k) out << ',';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<LabelRow> read_label_rows(const fs::path& path) {
  auto in = open_in(path);
  std::vector<LabelRow> rows;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = trim(line);
    if (text.empty()) continue;
    if (!header) {
      if (text != "frame,phase_id") {
        throw ParseError(path.string() + ": expected header 'frame,phase_id'", line_no);
      }
      header = true;
      continue;
    }
    const auto cells = split_commas(text);
    if (cells.size() != 2) {
      throw ParseError(path.string() + " line " + std::to_string(line_no) + ": expected 2 columns",
                       line_no);
    }
    LabelRow r{parse_number<std::int64_t>(cells[0], path, line_no),
               parse_number<int>(cells[1], path, line_no)};
    if (r.frame < 0) {
      throw ValidationError(path.string() + " line " + std::to_string(line_no) +
                            ": negative frame index");
    }
    if (r.phase < kIgnoreLabel) {
      throw ValidationError(path.string() + " line " + std::to_string(line_no) +
                            ": phase id must be >= -1");
    }
    if (!rows.empty() && r.frame <= rows.back().frame) {
      throw ValidationError(path.string() + " line " + std::to_string(line_no) +
                            ": frames must strictly increase");
    }
    rows.push_back(r);
  }
  if (!header) throw ParseError(path.string() + ": missing header 'frame,phase_id'", 0);
  return rows;
}

PhaseTimeline read_labels(const fs::path& path, std::int64_t frames) {
  const auto rows = read_label_rows(path);
  if (rows.empty()) throw ValidationError(path.string() + ": no label rows");
  if (frames < 0) frames = rows.back().frame + 1;
  PhaseTimeline tl(static_cast<std::size_t>(frames), kIgnoreLabel);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].frame >= frames) {
      throw ValidationError(path.string() + ": label frame " + std::to_string(rows[i].frame) +
                            " beyond sequence length " + std::to_string(frames));
    }
    const std::int64_t end = i + 1 < rows.size() ? rows[i + 1].frame : frames;
    std::fill(tl.begin() + rows[i].frame, tl.begin() + end, rows[i].phase);
  }
  return tl;
}

void write_label_boundaries(const fs::path& path, std::span<const Boundary> rows) {
  auto out = open_out(path);
  out << "frame,phase_id\n";
  for (const auto& b : rows) out << b.frame << ',' << b.phase << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

void write_label_frames(const fs::path& path, std::span<const int> timeline) {
  auto out = open_out(path);
  out << "frame,phase_id\n";
  for (std::size_t t = 0; t < timeline.size(); ++t) out << t << ',' << timeline[t] << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<Boundary> timeline_boundaries(std::span<const int> timeline) {
  std::vector<Boundary> out;
  for (std::size_t t = 0; t < timeline.size(); ++t) {
    if (timeline[t] == kIgnoreLabel) {
      if (!out.empty()) {
        throw ValidationError("timeline_boundaries: ignored frame after the first labelled frame");
      }
      continue;
    }
    if (out.empty() || timeline[t] != out.back().phase) {
      out.push_back({static_cast<std::int64_t>(t), timeline[t]});
    }
  }
  return out;
}

std::vector<DatasetEntry> list_split(const fs::path& root, const std::string& split) {
  const fs::path dir = root / split;
  if (!fs::is_directory(dir)) throw IoError("missing dataset split directory " + dir.string());
  static const std::string kSuffix = ".features.csv";
  std::vector<DatasetEntry> entries;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.size() <= kSuffix.size() ||
        name.compare(name.size() - kSuffix.size(), kSuffix.size(), kSuffix) != 0) {
      continue;
    }
    DatasetEntry d;
    d.id = name.substr(0, name.size() - kSuffix.size());
    d.features = e.path();
    d.labels = dir / (d.id + ".labels.csv");
    if (!fs::exists(d.labels)) throw IoError("missing labels for " + d.features.string());
    entries.push_back(std::move(d));
  }
  std::sort(entries.begin(), entries.end(),
            [](const DatasetEntry& a, const DatasetEntry& b) { return a.id < b.id; });
  if (entries.empty()) throw ValidationError("no sequences in " + dir.string());
  return entries;
}

void write_split(const fs::path& root, const std::string& split,
                 std::span<const SyntheticSequence> sequences, std::size_t first_index) {
  const fs::path dir = root / split;
  fs::create_directories(dir);
  char id[32];
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    std::snprintf(id, sizeof id, "seq_%03zu", first_index + i);
    write_features(dir / (std::string(id) + ".features.csv"), sequences[i].features);
    write_label_frames(dir / (std::string(id) + ".labels.csv"), sequences[i].labels);
  }
}

}  // namespace phaseseg
