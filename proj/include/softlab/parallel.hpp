#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace softlab {

/// Worker count: SOFTLAB_THREADS env var, else hardware concurrency.
inline std::size_t thread_count() {
  if (const char* env = std::getenv("SOFTLAB_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<std::size_t>(n);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

/// Runs fn(block_index, begin, end) over fixed-size blocks of [0, items).
/// The block decomposition never depends on the worker count, so callers
/// that store per-block partial results and merge them in block order get
/// bitwise-identical reductions for any number of threads.
inline void parallel_blocks(std::size_t items, std::size_t block_size,
                            const std::function<void(std::size_t, std::size_t, std::size_t)>& fn,
                            std::size_t workers = thread_count()) {
  if (items == 0) return;
  const std::size_t n_blocks = (items + block_size - 1) / block_size;
  auto run_block = [&](std::size_t b) {
    const std::size_t begin = b * block_size;
    const std::size_t end = std::min(items, begin + block_size);
    fn(b, begin, end);
  };
  if (workers <= 1 || n_blocks <= 1) {
    for (std::size_t b = 0; b < n_blocks; ++b) run_block(b);
    return;
  }
  const std::size_t n_workers = std::min(workers, n_blocks);
  std::vector<std::thread> pool;
  pool.reserve(n_workers);
  for (std::size_t w = 0; w < n_workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t b = w; b < n_blocks; b += n_workers) run_block(b);
    });
  }
  for (auto& t : pool) t.join();
}

inline constexpr std::size_t kContextBlock = 64;

}  // namespace softlab
