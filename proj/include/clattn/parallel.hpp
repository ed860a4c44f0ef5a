#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace clattn {

// Runs fn(begin, end) over contiguous chunks of [0, n). Each index is owned by
// exactly one chunk and per-index work must not depend on the chunking, which
// keeps results bit-identical for any thread count.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  if (threads <= 1 || n < 2) {
    fn(std::size_t{0}, n);
    return;
  }
  threads = std::min(threads, n);
  const std::size_t chunk = (n + threads - 1) / threads;
  std::vector<std::jthread> workers;
  workers.reserve(threads);
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(n, begin + chunk);
    workers.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
}

}  // namespace clattn
