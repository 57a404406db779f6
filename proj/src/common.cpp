#include "qv/common.hpp"

#include <algorithm>
#include <thread>
#include <vector>

namespace qv {

int compute_threads() {
  static const int n = [] {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    return static_cast<int>(std::min(hw, 16u));
  }();
  return n;
}

void parallel_for(int64_t n, int64_t grain,
                  const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  if (grain < 1) grain = 1;
  const int workers = static_cast<int>(
      std::min<int64_t>(compute_threads(), (n + grain - 1) / grain));
  if (workers <= 1) {
    fn(0, n);
    return;
  }
  const int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (int w = 1; w < workers; ++w) {
    const int64_t lo = w * chunk;
    const int64_t hi = std::min<int64_t>(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  fn(0, std::min<int64_t>(n, chunk));
  for (auto& t : pool) t.join();
}

}  // namespace qv
