#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace nvcav {

/// Repetitions are cut into fixed-size blocks. Each block is reduced on its
/// own and the block results are merged strictly in block order, so the final
/// value does not depend on how many workers ran or how they interleaved.
inline constexpr std::uint64_t kBlockSize = 4096;

inline unsigned resolve_workers(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

/// `work(begin, end)` returns a partial result for repetitions [begin, end);
/// `merge(acc, part)` folds a partial result into the accumulator.
template <class Acc, class Work, class Merge>
Acc block_reduce(std::uint64_t n, unsigned workers, Work&& work, Merge&& merge, Acc init = Acc{},
                 std::uint64_t block = kBlockSize) {
  if (block == 0) block = kBlockSize;
  const std::uint64_t nblocks = (n + block - 1) / block;
  std::vector<std::optional<Acc>> parts(nblocks);
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto run = [&] {
    for (;;) {
      const std::uint64_t b = next.fetch_add(1);
      if (b >= nblocks) return;
      try {
        const std::uint64_t begin = b * block;
        parts[b].emplace(work(begin, std::min(n, begin + block)));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(nblocks);
        return;
      }
    }
  };

  const unsigned w = std::max(1u, std::min<unsigned>(resolve_workers(workers),
                                                     static_cast<unsigned>(std::max<std::uint64_t>(nblocks, 1))));
  if (w == 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(w);
    for (unsigned i = 0; i < w; ++i) pool.emplace_back(run);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  Acc acc = std::move(init);
  for (auto& p : parts) merge(acc, std::move(*p));
  return acc;
}

/// Parallel loop over independent indices with no reduction.
template <class Body>
void parallel_for(std::uint64_t n, unsigned workers, Body&& body, std::uint64_t block = 1) {
  struct Unit {};
  block_reduce<Unit>(
      n, workers,
      [&](std::uint64_t b, std::uint64_t e) {
        for (std::uint64_t i = b; i < e; ++i) body(i);
        return Unit{};
      },
      [](Unit&, Unit&&) {}, Unit{}, block);
}

}  // namespace nvcav
