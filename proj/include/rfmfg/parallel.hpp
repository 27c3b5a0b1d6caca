#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace rfmfg {

/// Agents are processed in fixed-size blocks. Block boundaries never depend on
/// the thread count, so any reduction done per block and then combined in block
/// order is bit-identical for every `threads` setting.
inline constexpr std::size_t kAgentBlock = 16;

inline std::size_t block_count(std::size_t n, std::size_t block = kAgentBlock) {
  return (n + block - 1) / block;
}

inline std::size_t resolve_threads(std::size_t threads) {
  if (threads != 0) return threads;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Calls fn(b) for every block index b in [0, blocks). Blocks are claimed
/// round-robin by worker threads; fn must only write block-private data.
template <class Fn>
void parallel_blocks(std::size_t blocks, std::size_t threads, Fn&& fn) {
  threads = std::min(resolve_threads(threads), blocks);
  if (threads <= 1) {
    for (std::size_t b = 0; b < blocks; ++b) fn(b);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::jthread> workers;
  workers.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      try {
        for (std::size_t b = t; b < blocks; b += threads) fn(b);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  workers.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace rfmfg
