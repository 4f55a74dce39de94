#pragma once

#include <cstdint>
#include <functional>

namespace meshsdf {

/// Number of reduction slots every parallel loop is split into. Slot
/// boundaries depend only on the iteration count, so any reduction that
/// merges per-slot partials in slot order gives the same result for every
/// worker count.
inline constexpr int kReductionSlots = 64;

/// max(1, std::thread::hardware_concurrency()).
int default_worker_count();

/// Resolve a user-facing worker request: 0 means the hardware default.
int resolve_workers(int requested);

/// Runs fn(slot, begin, end) for kReductionSlots half-open ranges covering
/// [0, n). Slots are distributed over min(workers, slots) threads; with one
/// worker everything runs inline on the calling thread. fn must only write
/// to slot-local or disjoint per-index state.
void parallel_for_slots(std::int64_t n, int workers,
                        const std::function<void(int, std::int64_t, std::int64_t)>& fn);

}  // namespace meshsdf
