#include "phaseseg/accumulator.hpp"

#include <algorithm>
#include <map>
#include <string>

namespace phaseseg {

void AccumulatorConfig::validate() const {
  if (threshold < 1) throw ValidationError("accumulator threshold must be >= 1");
}

namespace {

int majority_phase(std::span<const int> frames) {
  std::map<int, int> votes;
  for (int p : frames) ++votes[p];
  int best = frames.front();
  int best_votes = 0;
  for (const auto& [phase, n] : votes) {  // ascending phase id, so ties keep the lower id
    if (n > best_votes) {
      best = phase;
      best_votes = n;
    }
  }
  return best;
}

}  // namespace

PhaseTimeline smooth_timeline(std::span<const int> predictions, const AccumulatorConfig& cfg) {
  cfg.validate();
  if (predictions.empty()) throw ValidationError("smooth_timeline: empty prediction sequence");
  for (std::size_t t = 0; t < predictions.size(); ++t) {
    if (predictions[t] < 0) {
      throw ValidationError("smooth_timeline: negative phase id at frame " + std::to_string(t));
    }
  }

  const std::size_t warmup = std::min<std::size_t>(predictions.size(), cfg.threshold);
  int current = majority_phase(predictions.first(warmup));
  PhaseTimeline out(predictions.size(), current);

  int target = -1;
  std::size_t run_start = 0;
  int run_length = 0;
  for (std::size_t t = 0; t < predictions.size(); ++t) {
    const int p = predictions[t];
    const bool legal = cfg.allow_skip ? p > current : p == current + 1;
    if (!legal) {
      run_length = 0;
    } else if (run_length > 0 && p == target) {
      ++run_length;
    } else {
      target = p;
      run_start = t;
      run_length = 1;
    }

    if (run_length >= cfg.threshold) {
      current = target;
      const std::size_t from = cfg.retroactive ? run_start : t;
      std::fill(out.begin() + static_cast<std::ptrdiff_t>(from), out.end(), current);
      run_length = 0;
    }
  }
  return out;
}

template <typename Scalar>
PhaseTimeline argmax_decode(const ProbSequence<Scalar>& probs) {
  const auto& p = probs.data();
  PhaseTimeline out(p.rows());
  for (Eigen::Index t = 0; t < p.rows(); ++t) {
    int best = 0;
    for (Eigen::Index c = 1; c < p.cols(); ++c) {
      if (p(t, c) > p(t, best)) best = static_cast<int>(c);
    }
    out[t] = best;
  }
  return out;
}

template PhaseTimeline argmax_decode(const ProbSequence<float>&);
template PhaseTimeline argmax_decode(const ProbSequence<double>&);

}  // namespace phaseseg
