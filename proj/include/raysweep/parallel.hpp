#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace raysweep {

/// Worker count: an explicit positive request wins, otherwise the
/// RAYSWEEP_THREADS environment variable (0 = auto), otherwise hardware
/// concurrency.
inline std::size_t resolve_thread_count(int requested = 0) {
  if (requested > 0) return static_cast<std::size_t>(requested);
  if (const char* env = std::getenv("RAYSWEEP_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Splits [0, n) into `blocks` contiguous ranges, balanced to within one.
inline std::vector<std::pair<std::size_t, std::size_t>> split_range(std::size_t n, std::size_t blocks) {
  blocks = std::max<std::size_t>(1, blocks);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(blocks);
  const std::size_t base = n / blocks;
  const std::size_t extra = n % blocks;
  std::size_t begin = 0;
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t len = base + (b < extra ? 1 : 0);
    out.emplace_back(begin, begin + len);
    begin += len;
  }
  return out;
}

/// Runs fn(block, begin, end) for each block of [0, n), one thread per
/// block. The first exception thrown by any worker is rethrown.
template <typename Fn>
void parallel_blocks(std::size_t n, std::size_t blocks, Fn&& fn) {
  const auto ranges = split_range(n, blocks);
  if (ranges.size() == 1) {
    fn(std::size_t{0}, ranges[0].first, ranges[0].second);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  workers.reserve(ranges.size());
  for (std::size_t b = 0; b < ranges.size(); ++b) {
    workers.emplace_back([&, b] {
      try {
        fn(b, ranges[b].first, ranges[b].second);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace raysweep
