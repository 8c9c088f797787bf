#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace shlight {

// Worker count: explicit override > SHL_THREADS env var > hardware threads.
int worker_threads();
void set_worker_threads(int n);  // n <= 0 restores the default

// Runs fn(begin, end) over [0, n) split into contiguous chunks, one chunk
// per worker. Work items must be independent; callers that reduce results
// must do so in item order so the outcome does not depend on scheduling.
void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

// Fixed-order pairwise summation (recursive halving). Deterministic for a
// given input array regardless of how the array was produced in parallel.
double pairwise_sum(std::span<const double> values);

}  // namespace shlight
