#include "prag/detail/parallel.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace prag::detail {

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_blocks(std::size_t total, int threads,
                     const std::function<void(int, std::size_t, std::size_t)>& fn) {
  if (total == 0) return;
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(resolve_threads(threads)), total);
  const std::size_t base = total / workers;
  const std::size_t extra = total % workers;

  auto block = [&](std::size_t w) {
    const std::size_t begin = w * base + std::min(w, extra);
    const std::size_t end = begin + base + (w < extra ? 1 : 0);
    return std::pair{begin, end};
  };

  if (workers == 1) {
    fn(0, 0, total);
    return;
  }

  std::mutex fail_mutex;
  std::exception_ptr failure;
  auto run = [&](std::size_t w) {
    try {
      const auto [begin, end] = block(w);
      fn(static_cast<int>(w), begin, end);
    } catch (...) {
      std::lock_guard lock(fail_mutex);
      if (!failure) failure = std::current_exception();
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run, w);
  run(0);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace prag::detail
