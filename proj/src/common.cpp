#include "ovf/common.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace ovf {

namespace {
std::atomic<int> g_threads{0};

int detect_threads() {
  if (const char* env = std::getenv("OVFILT_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}
}  // namespace

int max_threads() {
  int n = g_threads.load();
  if (n == 0) {
    n = detect_threads();
    g_threads.store(n);
  }
  return n;
}

void set_threads(int n) {
  require(n >= 1, "set_threads: n must be >= 1");
  g_threads.store(n);
}

void parallel_for(int n, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  int workers = std::min(max_threads(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  int chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    int lo = w * chunk;
    int hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (int i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace ovf
