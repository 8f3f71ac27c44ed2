#pragma once

// Frame-level evaluation: confusion matrix, per-class and macro
// precision/recall/F1, accuracy, segment counts, and prediction ribbons.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "phaseseg/accumulator.hpp"

namespace phaseseg {

/// C x C counts; rows are ground truth, columns are predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes);

  int classes() const { return classes_; }
  std::int64_t operator()(int truth, int predicted) const {
    return counts_[static_cast<std::size_t>(truth) * classes_ + predicted];
  }
  void add(int truth, int predicted, std::int64_t n = 1);
  std::int64_t total() const;
  std::int64_t trace() const;

 private:
  int classes_;
  std::vector<std::int64_t> counts_;
};

/// Tallies non-ignored frames. A frame is ignored when ignore[t] is nonzero or
/// gt[t] == kIgnoreLabel. An empty `ignore` span ignores nothing.
ConfusionMatrix confusion(std::span<const int> gt, std::span<const int> pred, int classes,
                          std::span<const std::uint8_t> ignore = {});

struct ClassMetrics {
  double precision = 0.0;  ///< percent
  double recall = 0.0;     ///< percent
  double f1 = 0.0;         ///< percent
  std::int64_t support = 0;
  std::int64_t predicted = 0;
  bool precision_undefined = false;  ///< no predictions of this class; reported as 0
  bool recall_undefined = false;     ///< no ground-truth frames of this class; reported as 0
  bool in_macro = true;              ///< false when the class has no support and no predictions
};

struct MetricReport {
  std::vector<ClassMetrics> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;  ///< percent
  std::int64_t frames = 0;
};

/// Throws ValidationError on an empty matrix.
MetricReport report(const ConfusionMatrix& cm);

nlohmann::json to_json(const MetricReport& r, std::span<const std::string> class_names);
/// Fixed-width table, percentages rounded to two decimals.
std::string to_table(const MetricReport& r, std::span<const std::string> class_names);

/// Number of maximal runs of equal labels.
std::size_t segment_count(std::span<const int> timeline);

/// Fill colour of a phase in ribbons; kIgnoreLabel maps to grey.
std::string phase_color(int phase);

/// Writes `svg_path` (two horizontal tracks, ground truth above prediction)
/// and a CSV `frame,gt,pred` next to it with the extension replaced by .csv.
void export_ribbon(std::span<const int> gt, std::span<const int> pred,
                   std::span<const std::string> class_names, const std::string& svg_path,
                   const std::string& top_name = "ground truth",
                   const std::string& bottom_name = "prediction");

}  // namespace phaseseg
