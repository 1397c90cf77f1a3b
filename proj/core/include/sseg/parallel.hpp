#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace sseg {

// Process-wide worker cap, set once by the CLI --threads flag (0 = auto).
// max_threads()==1 is the bit-reproducibility mode; for any fixed value the
// static partitioning below keeps results bit-identical across runs.
void set_max_threads(int n);
int max_threads();

// Number of worker slots parallel_for_chunks will use for n items.
int plan_workers(std::size_t n);

// Static contiguous partition of [0, n) over up to max_threads() workers.
// fn(worker, begin, end); fn must only write state disjoint per index or per
// worker slot. Exceptions are rethrown on the calling thread (first one wins).
template <typename Fn>
void parallel_for_chunks(std::size_t n, Fn&& fn) {
  if (n == 0) return;
  const int workers = plan_workers(n);
  if (workers == 1) {
    fn(0, std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  std::exception_ptr first_error;
  std::atomic_flag error_claimed = ATOMIC_FLAG_INIT;
  const std::size_t chunk =
      (n + static_cast<std::size_t>(workers) - 1) / static_cast<std::size_t>(workers);
  for (int w = 0; w < workers; ++w) {
    const std::size_t begin = static_cast<std::size_t>(w) * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    threads.emplace_back([&fn, &first_error, &error_claimed, w, begin, end] {
      try {
        if (begin < end) fn(w, begin, end);
      } catch (...) {
        if (!error_claimed.test_and_set()) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  parallel_for_chunks(n, [&fn](int, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
  });
}

}  // namespace sseg
