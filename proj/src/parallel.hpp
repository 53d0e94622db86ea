#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <future>
#include <vector>

namespace nl2flow::detail {

/// Runs fn(i) for every i in [0, n) on up to `width` threads. Callers write
/// results into per-index slots, so output order never depends on timing.
template <typename Fn>
void fan_out(std::size_t n, int width, Fn fn) {
  const auto threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, width)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::future<void>> workers;
  for (std::size_t t = 0; t < threads; ++t) {
    workers.push_back(std::async(std::launch::async, [&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    }));
  }
  for (auto& w : workers) w.get();
}

}  // namespace nl2flow::detail
