#include "meshsdf/parallel.hpp"

#include <algorithm>
#include <thread>
#include <vector>

namespace meshsdf {

int default_worker_count() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

int resolve_workers(int requested) {
  return requested <= 0 ? default_worker_count() : requested;
}

void parallel_for_slots(std::int64_t n, int workers,
                        const std::function<void(int, std::int64_t, std::int64_t)>& fn) {
  if (n <= 0) return;
  const int slots = kReductionSlots;
  const std::int64_t chunk = (n + slots - 1) / slots;
  auto run_slot = [&](int slot) {
    const std::int64_t begin = slot * chunk;
    const std::int64_t end = std::min<std::int64_t>(begin + chunk, n);
    if (begin < end) fn(slot, begin, end);
  };

  workers = std::min(resolve_workers(workers), slots);
  if (workers <= 1) {
    for (int s = 0; s < slots; ++s) run_slot(s);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int s = w; s < slots; s += workers) run_slot(s);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace meshsdf
