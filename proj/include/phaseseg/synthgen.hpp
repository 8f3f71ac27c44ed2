#pragma once

// Synthetic stand-in for per-frame surgical embeddings. Every sequence walks
// the phases in order; each frame's features are the current phase's cluster
// centre plus Gaussian noise.

#include <cstdint>
#include <vector>

#include "phaseseg/accumulator.hpp"
#include "phaseseg/seqcore.hpp"

namespace phaseseg {

struct PhaseDuration {
  double mean_frames = 20.0;  ///< mean of the log-normal duration
  double log_sigma = 0.25;    ///< sigma of the underlying normal
};

struct SynthConfig {
  int dim = 64;
  std::vector<PhaseDuration> durations;  ///< one per phase; defines the class count
  std::vector<double> center_scale;      ///< per-phase centre magnitude (per coordinate)
  double noise_sigma = 2.0;
  /// Symmetric C x C pull between centres in [0,1); entry (a,b) moves both
  /// centres toward each other by that fraction of half their distance.
  std::vector<std::vector<double>> confusability;
  /// Probability that a frame's features imitate an adjacent phase while its
  /// label keeps the true phase.
  double label_noise_rate = 0.0;
  /// Width in frames of the blend between adjacent phase centres around each
  /// boundary; 0 disables blending.
  int boundary_blur = 0;
  bool include_all_phases = true;
  /// When include_all_phases is false, chance that a sequence is truncated
  /// at the start and/or the end.
  double incomplete_rate = 0.5;
  std::uint64_t seed = 0;

  int classes() const { return static_cast<int>(durations.size()); }
  void validate() const;

  /// Four phases, sellar dominant and closure brief, d = 64.
  static SynthConfig default_profile();
  /// Sellar:closure mean duration ratio of 10:1 with sellar/closure centres
  /// pulled together.
  static SynthConfig imbalanced_profile();
  /// Heavy frame noise and adjacent-phase imitation for over-segmentation
  /// studies.
  static SynthConfig noisy_profile();
};

struct SyntheticSequence {
  MatrixD features;
  PhaseTimeline labels;
};

/// Phase centres implied by cfg (depends only on cfg.seed, dim and the
/// per-phase settings).
std::vector<VectorD> phase_centers(const SynthConfig& cfg);

/// Deterministic per (cfg, n); sequence i only depends on cfg and i.
std::vector<SyntheticSequence> generate(const SynthConfig& cfg, std::size_t n);

/// Splits consecutive sequences of a single generate() call into
/// train/val/test sizes.
struct SyntheticSplits {
  std::vector<SyntheticSequence> train;
  std::vector<SyntheticSequence> val;
  std::vector<SyntheticSequence> test;
};
SyntheticSplits generate_splits(const SynthConfig& cfg, std::size_t train, std::size_t val,
                                std::size_t test);

}  // namespace phaseseg
