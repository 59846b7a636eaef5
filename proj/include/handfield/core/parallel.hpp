#pragma once

#include <thread>
#include <vector>

namespace handfield {

// Static chunked parallel map: fn(begin, end, thread_index). Chunk
// boundaries depend only on (n, threads), keeping any per-thread reduction
// order deterministic for a fixed thread count. threads <= 1 runs inline.
template <typename F>
void parallel_for_chunks(size_t n, int threads, F&& fn) {
  if (threads <= 1 || n <= 1) {
    fn(size_t(0), n, 0);
    return;
  }
  const size_t workers = std::min<size_t>(size_t(threads), n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const size_t chunk = (n + workers - 1) / workers;
  for (size_t t = 0; t < workers; ++t) {
    const size_t begin = t * chunk;
    const size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end, t] { fn(begin, end, int(t)); });
  }
  for (std::thread& th : pool) th.join();
}

}  // namespace handfield
