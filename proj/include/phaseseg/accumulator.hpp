#pragma once

// Counter-based post-processing that turns noisy per-frame phase predictions
// into a timeline that only ever moves forward through the ordered phases.

#include <span>
#include <vector>

#include "phaseseg/seqcore.hpp"

namespace phaseseg {

/// Per-frame phase ids.
using PhaseTimeline = std::vector<int>;

/// Frame label that is excluded from losses and metrics.
inline constexpr int kIgnoreLabel = -1;

struct AccumulatorConfig {
  int threshold = 30;        ///< consecutive supporting frames needed to commit
  bool allow_skip = false;   ///< accept any later phase, not only current + 1
  bool retroactive = true;   ///< relabel from the first frame of the committing run

  void validate() const;
};

/// State machine:
///  - the initial phase is the majority vote over the first `threshold`
///    frames (ties go to the lower phase id);
///  - a frame predicting a legal successor of the current phase opens or
///    extends a run; any other prediction resets the run;
///  - a run of `threshold` consecutive frames commits the transition.
/// With allow_skip, a run must keep predicting the same target phase.
PhaseTimeline smooth_timeline(std::span<const int> predictions, const AccumulatorConfig& cfg);

/// Per-frame argmax, ties resolved toward the lower phase id.
template <typename Scalar>
PhaseTimeline argmax_decode(const ProbSequence<Scalar>& probs);

}  // namespace phaseseg
