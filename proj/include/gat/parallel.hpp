#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace gat {

// Runs body(i) for i in [0, n) over a fixed number of worker threads.
// Work is split into contiguous blocks, so results never depend on the
// thread count as long as body(i) only writes to slot i.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
  std::size_t workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t block = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * block;
    const std::size_t hi = std::min(n, lo + block);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body] {
      for (std::size_t i = lo; i < hi; ++i) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace gat
