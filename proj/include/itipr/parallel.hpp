#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace itipr {

// Runs fn(i) for i in [0, n) across `workers` threads and returns results in
// index order. Scheduling is dynamic but results are slotted by index, so the
// output never depends on thread timing.
template <typename Result>
std::vector<Result> parallel_map(int n, int workers, const std::function<Result(int)>& fn) {
  std::vector<Result> out(n);
  if (n == 0) return out;
  if (workers < 1) workers = 1;
  if (workers == 1 || n == 1) {
    for (int i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto body = [&]() {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        out[i] = fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int spawn = std::min(workers, n);
  pool.reserve(spawn);
  for (int w = 0; w < spawn; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace itipr
