#pragma once

// Optimisation loop for the segmentation network: AdamW with decoupled
// weight decay, per-step cosine annealing, optional class-balanced sequence
// sampling, and early stopping on validation loss.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "phaseseg/losses.hpp"
#include "phaseseg/mstcn.hpp"

namespace phaseseg {

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
struct AdamWState {
  std::uint64_t step = 0;
  std::vector<std::vector<Scalar>> first_moment;
  std::vector<std::vector<Scalar>> second_moment;
};

/// One AdamW update (PyTorch semantics): p <- p (1 - lr wd), then
/// p <- p - lr m_hat / (sqrt(v_hat) + eps). Moment buffers are created on
/// the first call. Throws NumericError naming the block on a non-finite
/// gradient, before touching any parameter.
template <typename Scalar>
void adamw_step(std::span<const ParamBlock<Scalar>> params,
                std::span<const ParamBlock<const Scalar>> grads, AdamWState<Scalar>& state,
                double lr, double weight_decay, const AdamWHyper& hyper = {});

/// base_lr * 0.5 * (1 + cos(pi * step / total_steps)), never negative.
double cosine_lr(std::uint64_t step, std::uint64_t total_steps, double base_lr);

enum class SamplingMode { kUniform, kClassBalanced };

/// Weight of each sequence under class-balanced sampling: the mean, over its
/// counted frames, of 1 / (training-set frequency of the frame's class).
/// Normalised to sum to 1.
std::vector<double> balanced_sequence_weights(std::span<const std::vector<int>> label_sets,
                                              int classes);

/// Order of sequence indices for one epoch. Uniform mode is a seeded
/// permutation; class-balanced mode draws the same number of indices with
/// replacement using balanced_sequence_weights.
std::vector<std::size_t> sample_epoch(std::span<const std::vector<int>> label_sets, int classes,
                                      SamplingMode mode, std::uint64_t seed);

enum class AlphaMode { kUniform, kInverseFrequency };

struct TrainConfig {
  int epochs = 100;
  double learning_rate = 1e-5;
  int batch_size = 1;  ///< sequences accumulated per optimiser step
  int patience = 3;
  std::uint64_t seed = 0;
  double weight_decay = 0.01;
  SamplingMode sampling = SamplingMode::kUniform;
  AlphaMode alpha_mode = AlphaMode::kUniform;
  ObjectiveConfig objective;

  void validate() const;
};

/// Stops once the monitored value has risen for `patience` consecutive
/// updates.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);
  /// Returns true when training should stop after this value.
  bool update(double value);
  int rises() const { return rises_; }

 private:
  int patience_;
  int rises_ = 0;
  bool has_previous_ = false;
  double previous_ = 0.0;
};

template <typename Scalar>
struct LabeledSequence {
  std::string id;
  FeatureSequence<Scalar> features;
  std::vector<int> labels;  ///< kIgnoreLabel marks excluded frames
};

struct EpochRecord {
  int epoch = 0;  ///< 1-based
  LossBreakdown train;  ///< mean over the sequences visited this epoch
  double val_loss = 0.0;
  double val_accuracy = 0.0;  ///< fraction in [0,1], final stage argmax
  double learning_rate = 0.0;  ///< rate used by the epoch's last step
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int stop_epoch = 0;
  int best_epoch = 0;  ///< checkpoint id: epoch with the lowest validation loss
  double best_val_loss = 0.0;
  bool early_stopped = false;
  bool diverged = false;
  std::string message;
};

template <typename Scalar>
struct Evaluation {
  double loss = 0.0;      ///< mean total loss per sequence
  double accuracy = 0.0;  ///< counted-frame accuracy of the final stage
};

/// Validation pass. Sequences are evaluated concurrently; the reduction runs
/// in sequence order.
template <typename Scalar>
Evaluation<Scalar> evaluate(const Model<Scalar>& model,
                            std::span<const LabeledSequence<Scalar>> sequences,
                            const ObjectiveConfig& objective);

template <typename Scalar>
struct FitResult {
  TrainReport report;
  Model<Scalar> best;
  Model<Scalar> last;
  AdamWState<Scalar> optimizer;
};

template <typename Scalar>
FitResult<Scalar> fit(Model<Scalar> model, std::span<const LabeledSequence<Scalar>> train,
                      std::span<const LabeledSequence<Scalar>> val, const TrainConfig& cfg);

/// Checkpoint file: a model record followed by "ADAM", u64 step, u32 block
/// count, then per block u64 length and the first and second moments in the
/// model's scalar width.
template <typename Scalar>
void save_checkpoint(const std::string& path, const Model<Scalar>& model,
                     const AdamWState<Scalar>& state);

template <typename Scalar>
struct Checkpoint {
  Model<Scalar> model;
  AdamWState<Scalar> optimizer;
};

template <typename Scalar>
Checkpoint<Scalar> load_checkpoint(const std::string& path);

}  // namespace phaseseg
