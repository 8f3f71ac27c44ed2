#include "phaseseg/evalmetrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "phaseseg/losses.hpp"

namespace phaseseg {

ConfusionMatrix::ConfusionMatrix(int classes) : classes_(classes) {
  if (classes < 1) throw ValidationError("confusion matrix needs at least one class");
  counts_.assign(static_cast<std::size_t>(classes) * classes, 0);
}

void ConfusionMatrix::add(int truth, int predicted, std::int64_t n) {
  if (truth < 0 || truth >= classes_ || predicted < 0 || predicted >= classes_) {
    throw ValidationError("confusion: label pair (" + std::to_string(truth) + ", " +
                          std::to_string(predicted) + ") outside [0," + std::to_string(classes_) +
                          ")");
  }
  counts_[static_cast<std::size_t>(truth) * classes_ + predicted] += n;
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t n = 0;
  for (auto c : counts_) n += c;
  return n;
}

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t n = 0;
  for (int c = 0; c < classes_; ++c) n += (*this)(c, c);
  return n;
}

ConfusionMatrix confusion(std::span<const int> gt, std::span<const int> pred, int classes,
                          std::span<const std::uint8_t> ignore) {
  if (gt.size() != pred.size()) {
    throw ShapeError("confusion: " + std::to_string(gt.size()) + " ground-truth frames vs " +
                     std::to_string(pred.size()) + " predicted");
  }
  if (!ignore.empty() && ignore.size() != gt.size()) {
    throw ShapeError("confusion: ignore mask length differs from the timeline");
  }
  ConfusionMatrix cm(classes);
  for (std::size_t t = 0; t < gt.size(); ++t) {
    if ((!ignore.empty() && ignore[t]) || gt[t] == kIgnoreLabel) continue;
    cm.add(gt[t], pred[t]);
  }
  return cm;
}

MetricReport report(const ConfusionMatrix& cm) {
  const std::int64_t total = cm.total();
  if (total == 0) throw ValidationError("report: confusion matrix is empty");
  const int n = cm.classes();
  MetricReport r;
  r.frames = total;
  r.accuracy = 100.0 * static_cast<double>(cm.trace()) / static_cast<double>(total);
  int in_macro = 0;
  for (int c = 0; c < n; ++c) {
    ClassMetrics m;
    const auto tp = static_cast<double>(cm(c, c));
    for (int k = 0; k < n; ++k) {
      m.support += cm(c, k);
      m.predicted += cm(k, c);
    }
    m.precision_undefined = m.predicted == 0;
    m.recall_undefined = m.support == 0;
    m.precision = m.precision_undefined ? 0.0 : 100.0 * tp / static_cast<double>(m.predicted);
    m.recall = m.recall_undefined ? 0.0 : 100.0 * tp / static_cast<double>(m.support);
    const double pr = m.precision + m.recall;
    m.f1 = pr > 0.0 ? 2.0 * m.precision * m.recall / pr : 0.0;
    m.in_macro = m.support > 0 || m.predicted > 0;
    if (m.in_macro) {
      r.macro_precision += m.precision;
      r.macro_recall += m.recall;
      r.macro_f1 += m.f1;
      ++in_macro;
    }
    r.per_class.push_back(m);
  }
  r.macro_precision /= in_macro;
  r.macro_recall /= in_macro;
  r.macro_f1 /= in_macro;
  return r;
}

namespace {

std::string class_label(std::span<const std::string> names, std::size_t c) {
  return c < names.size() ? names[c] : "class" + std::to_string(c);
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

}  // namespace

nlohmann::json to_json(const MetricReport& r, std::span<const std::string> class_names) {
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    classes.push_back({{"name", class_label(class_names, c)},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"f1", m.f1},
                       {"support", m.support},
                       {"predicted", m.predicted},
                       {"precision_undefined", m.precision_undefined},
                       {"recall_undefined", m.recall_undefined},
                       {"in_macro", m.in_macro}});
  }
  return {{"frames", r.frames},
          {"accuracy", r.accuracy},
          {"macro", {{"precision", r.macro_precision},
                     {"recall", r.macro_recall},
                     {"f1", r.macro_f1}}},
          {"classes", classes}};
}

std::string to_table(const MetricReport& r, std::span<const std::string> class_names) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %9s %9s %9s %9s\n", "phase", "precision", "recall",
                "f1", "support");
  os << line;
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    std::snprintf(line, sizeof line, "%-12s %9.2f %9.2f %9.2f %9lld%s\n",
                  class_label(class_names, c).c_str(), round2(m.precision), round2(m.recall),
                  round2(m.f1), static_cast<long long>(m.support),
                  (m.precision_undefined || m.recall_undefined) ? "  *" : "");
    os << line;
  }
  std::snprintf(line, sizeof line, "%-12s %9.2f %9.2f %9.2f %9lld\n", "macro",
                round2(r.macro_precision), round2(r.macro_recall), round2(r.macro_f1),
                static_cast<long long>(r.frames));
  os << line;
  std::snprintf(line, sizeof line, "accuracy %.2f\n", round2(r.accuracy));
  os << line;
  return os.str();
}

std::size_t segment_count(std::span<const int> timeline) {
  if (timeline.empty()) throw ValidationError("segment_count: empty timeline");
  std::size_t n = 1;
  for (std::size_t t = 1; t < timeline.size(); ++t) {
    if (timeline[t] != timeline[t - 1]) ++n;
  }
  return n;
}

std::string phase_color(int phase) {
  static constexpr std::array<const char*, 10> kPalette = {
      "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
      "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  if (phase < 0) return "#c8c8c8";
  return kPalette[static_cast<std::size_t>(phase) % kPalette.size()];
}

void export_ribbon(std::span<const int> gt, std::span<const int> pred,
                   std::span<const std::string> class_names, const std::string& svg_path,
                   const std::string& top_name, const std::string& bottom_name) {
  if (gt.size() != pred.size()) throw ShapeError("export_ribbon: track lengths differ");
  if (gt.empty()) throw ValidationError("export_ribbon: empty timeline");

  const std::filesystem::path svg(svg_path);
  std::filesystem::path csv = svg;
  csv.replace_extension(".csv");

  constexpr double kWidth = 1000.0;
  constexpr double kTrack = 24.0;
  constexpr double kLabel = 90.0;
  const double scale = kWidth / static_cast<double>(gt.size());
  int max_phase = 0;
  for (std::size_t t = 0; t < gt.size(); ++t) max_phase = std::max({max_phase, gt[t], pred[t]});
  const int legend_items = std::max(static_cast<int>(class_names.size()), max_phase + 1);
  const double height = 2 * kTrack + 30 + 20.0 * ((legend_items + 3) / 4);

  std::ofstream out(svg, std::ios::trunc);
  if (!out) throw IoError("cannot open " + svg.string() + " for writing");
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kLabel + kWidth + 10
      << "\" height=\"" << height << "\">\n";
  auto track = [&](std::span<const int> labels, double y, const std::string& name) {
    out << "  <text x=\"4\" y=\"" << y + kTrack * 0.7 << "\" font-size=\"12\">" << name
        << "</text>\n";
    std::size_t start = 0;
    for (std::size_t t = 1; t <= labels.size(); ++t) {
      if (t == labels.size() || labels[t] != labels[start]) {
        out << "  <rect x=\"" << kLabel + start * scale << "\" y=\"" << y << "\" width=\""
            << (t - start) * scale << "\" height=\"" << kTrack << "\" fill=\""
            << phase_color(labels[start]) << "\"/>\n";
        start = t;
      }
    }
  };
  track(gt, 4, top_name);
  track(pred, 8 + kTrack, bottom_name);
  for (int p = 0; p < legend_items; ++p) {
    const double x = kLabel + (p % 4) * 200.0;
    const double y = 2 * kTrack + 20 + 20.0 * (p / 4);
    out << "  <rect x=\"" << x << "\" y=\"" << y << "\" width=\"12\" height=\"12\" fill=\""
        << phase_color(p) << "\"/>\n";
    out << "  <text x=\"" << x + 16 << "\" y=\"" << y + 11 << "\" font-size=\"12\">"
        << class_label(class_names, p) << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw IoError("failed writing " + svg.string());

  std::ofstream table(csv, std::ios::trunc);
  if (!table) throw IoError("cannot open " + csv.string() + " for writing");
  table << "frame,gt,pred\n";
  for (std::size_t t = 0; t < gt.size(); ++t) table << t << ',' << gt[t] << ',' << pred[t] << '\n';
  if (!table) throw IoError("failed writing " + csv.string());
}

}  // namespace phaseseg
