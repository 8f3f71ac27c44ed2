#pragma once

#include <cstddef>
#include <functional>

namespace phaseseg {

/// Worker count: PHASESEG_THREADS when set to a positive integer, otherwise
/// the hardware concurrency (at least 1).
std::size_t thread_budget();

/// Runs fn(i) for i in [0, n) on up to thread_budget() threads. Callers write
/// results into per-index slots and reduce them in index order afterwards,
/// which keeps reductions independent of scheduling. The first exception
/// (lowest index) is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace phaseseg
