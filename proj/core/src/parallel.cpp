#include "sseg/parallel.hpp"

namespace sseg {

namespace {
std::atomic<int> g_max_threads{0};
}

void set_max_threads(int n) { g_max_threads.store(n, std::memory_order_relaxed); }

int max_threads() {
  int n = g_max_threads.load(std::memory_order_relaxed);
  if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
  return std::max(1, n);
}

int plan_workers(std::size_t n) {
  return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(max_threads()), n));
}

}  // namespace sseg
