#pragma once

#include <algorithm>
#include <span>
#include <thread>
#include <vector>

namespace mstereo {

// Runs fn(i) for every i in [begin, end), splitting the range into
// contiguous blocks across at most `threads` workers. Callers must write
// only to disjoint outputs per index so the result does not depend on the
// partitioning.
template <typename Fn>
void parallel_for(int begin, int end, int threads, Fn&& fn) {
  const int n = end - begin;
  if (threads <= 1 || n <= 1) {
    for (int i = begin; i < end; ++i) fn(i);
    return;
  }
  const int workers = std::min(threads, n);
  const int chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    const int lo = begin + w * chunk;
    const int hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (int i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

// Cascade summation. Error grows O(log n) instead of O(n), and the result
// is a pure function of the value order, independent of how callers chunk
// their work.
double pairwise_sum(std::span<const double> values);

}  // namespace mstereo
