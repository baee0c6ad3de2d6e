#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace rexmv {

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs body(begin, end) over contiguous chunks of [0, n). Results must be
// written to disjoint slots so the output is independent of the thread
// count; any reduction happens after the join, in index order.
template <typename Body>
inline void parallel_for(long n, int threads, Body&& body) {
  threads = resolve_threads(threads);
  if (n <= 0) return;
  const long chunks = std::min<long>(threads, n);
  if (chunks <= 1) {
    body(0L, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(chunks));
  const long base = n / chunks, extra = n % chunks;
  long begin = 0;
  for (long i = 0; i < chunks; ++i) {
    const long end = begin + base + (i < extra ? 1 : 0);
    pool.emplace_back([&, i, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    });
    begin = end;
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace rexmv
