#pragma once

// Training objectives. Every loss returns its value together with the
// gradient of that value w.r.t. the quantity the caller backpropagates from:
// the pre-softmax logits for the per-frame losses, the raw embeddings for
// the contrastive loss.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "phaseseg/accumulator.hpp"
#include "phaseseg/seqcore.hpp"

namespace phaseseg {

/// Floor applied to every probability before taking its logarithm.
inline constexpr double kProbFloor = 1e-12;

struct FocalConfig {
  double gamma = 2.0;
  /// Per-class weights in [0,1]. Empty means 1.0 for every class.
  std::vector<double> alpha;

  /// Plain cross-entropy: gamma 0, unit weights.
  static FocalConfig cross_entropy() { return FocalConfig{0.0, {}}; }
  void validate(Eigen::Index classes) const;
};

/// Inverse-frequency class weights computed from counted (non-ignored)
/// labels, rescaled so the largest weight is 1. Classes that never occur get
/// weight 1.
std::vector<double> inverse_frequency_alpha(std::span<const std::vector<int>> label_sets,
                                            int classes);

struct ContrastiveConfig {
  double tau = 0.5;
  /// partner[i] is the index of the positive view of anchor i. Must be an
  /// involution without fixed points.
  std::vector<std::size_t> partner;

  /// Pairs (0,1), (2,3), ...
  static ContrastiveConfig adjacent_pairs(std::size_t rows, double tau);
  /// Pairs (i, i+N) for a batch laid out as [view A; view B].
  static ContrastiveConfig split_halves(std::size_t rows, double tau);
  void validate(std::size_t rows) const;
};

template <typename Scalar>
struct LossValue {
  double value = 0.0;
  Matrix<Scalar> grad;
};

/// Mean over counted frames of -alpha_y (1 - p_y)^gamma log p_y. Frames whose
/// label is kIgnoreLabel are skipped. The gradient is w.r.t. the logits that
/// produced `probs` through a row softmax.
template <typename Scalar>
LossValue<Scalar> focal_loss(const ProbSequence<Scalar>& probs, std::span<const int> labels,
                             const FocalConfig& cfg);

/// NT-Xent over 2N embeddings using cosine similarity at temperature tau,
/// averaged over all anchors. The gradient is w.r.t. the embeddings.
template <typename Scalar>
LossValue<Scalar> ntxent_loss(const Matrix<Scalar>& embeddings, const ContrastiveConfig& cfg);

struct SmoothingConfig {
  /// When set, |log p_t - log p_{t-1}| is clamped at this value.
  std::optional<double> clamp;
};

/// (1 / (T C)) sum_{t>=2} sum_c |log p_{t,c} - log p_{t-1,c}|, zero when
/// T < 2. Gradient w.r.t. logits.
template <typename Scalar>
LossValue<Scalar> smoothing_loss(const ProbSequence<Scalar>& probs,
                                 const SmoothingConfig& cfg = {});

enum class ClassificationLoss { kCrossEntropy, kFocal };

struct ObjectiveConfig {
  ClassificationLoss loss = ClassificationLoss::kFocal;
  FocalConfig focal;
  double lambda = 0.15;
  SmoothingConfig smoothing;

  /// The focal settings actually used (gamma 0, unit alpha for cross-entropy).
  FocalConfig effective_focal() const;
};

struct LossBreakdown {
  std::vector<double> focal;
  std::vector<double> smooth;
  double total = 0.0;
};

template <typename Scalar>
struct TotalLoss {
  LossBreakdown breakdown;
  /// One gradient per stage, w.r.t. that stage's logits.
  std::vector<Matrix<Scalar>> logit_grads;
};

/// sum_s (focal_s + lambda * smooth_s) over all stages.
template <typename Scalar>
TotalLoss<Scalar> total_loss(std::span<const ProbSequence<Scalar>> stage_probs,
                             std::span<const int> labels, const ObjectiveConfig& cfg);

}  // namespace phaseseg
