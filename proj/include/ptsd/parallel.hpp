#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace ptsd {

// Static chunking over [0, n). Bodies must be independent; determinism comes
// from giving each index its own derived RNG stream, never from scheduling.
template <typename F>
void parallel_for(int n, int threads, F&& body) {
  if (n <= 0) return;
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  const int chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int lo = t * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body] {
      for (int i = lo; i < hi; ++i) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace ptsd
