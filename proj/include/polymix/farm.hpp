#pragma once

// Trajectory farm: items [0, n) are cut into a fixed number of contiguous
// chunks that depends only on n. Each chunk is reduced sequentially in item
// order, and chunk results are returned in chunk order, so the outcome is
// independent of the number of workers.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace polymix::farm {

/// POLYMIX_WORKERS if set and positive, else the hardware concurrency.
unsigned default_workers();

struct ChunkPlan {
  std::uint64_t n_items = 0;
  std::uint64_t n_chunks = 0;

  static ChunkPlan for_items(std::uint64_t n, std::uint64_t max_chunks = 256) {
    return {n, std::max<std::uint64_t>(1, std::min(n, max_chunks))};
  }
  std::uint64_t begin(std::uint64_t c) const { return c * n_items / n_chunks; }
  std::uint64_t end(std::uint64_t c) const { return (c + 1) * n_items / n_chunks; }
};

/// Run `work(begin, end, acc)` over every chunk of `plan`, with up to
/// `workers` threads. Returns the per-chunk accumulators in chunk order.
template <class Acc, class Work>
std::vector<Acc> run_chunks(const ChunkPlan& plan, unsigned workers, const Acc& init, Work&& work) {
  std::vector<Acc> out(plan.n_chunks, init);
  if (plan.n_items == 0) return out;
  workers = std::max(1u, workers);
  const auto n_threads =
      static_cast<unsigned>(std::min<std::uint64_t>(workers, plan.n_chunks));

  std::atomic<std::uint64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto body = [&] {
    for (;;) {
      const std::uint64_t c = next.fetch_add(1);
      if (c >= plan.n_chunks) return;
      try {
        work(plan.begin(c), plan.end(c), out[c]);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next.store(plan.n_chunks);
        return;
      }
    }
  };

  if (n_threads == 1) {
    body();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(n_threads);
    for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(body);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

/// run_chunks followed by an in-order fold with `merge(total, chunk)`.
template <class Acc, class Work, class Merge>
Acc run_reduce(const ChunkPlan& plan, unsigned workers, const Acc& init, Work&& work,
               Merge&& merge) {
  auto parts = run_chunks(plan, workers, init, std::forward<Work>(work));
  Acc total = init;
  for (const auto& p : parts) merge(total, p);
  return total;
}

}  // namespace polymix::farm
