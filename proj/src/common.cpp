#include "egoeq/common.hpp"

#include <cstdlib>
#include <thread>
#include <vector>

namespace egoeq {

int max_threads() {
  static const int cached = [] {
    const char* env = std::getenv("EGOEQ_THREADS");
    if (env == nullptr) return 1;
    const long v = std::strtol(env, nullptr, 10);
    if (v < 1) return 1;
    const long hw = std::max(1u, std::thread::hardware_concurrency());
    return static_cast<int>(std::min(v, hw));
  }();
  return cached;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const int threads = max_threads();
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace egoeq
