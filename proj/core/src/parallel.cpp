#include "shlight/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>

namespace shlight {

namespace {

std::atomic<int> g_override{0};

int env_threads() {
    const char* v = std::getenv("SHL_THREADS");
    if (!v) return 0;
    int n = std::atoi(v);
    return n > 0 ? n : 0;
}

}  // namespace

int worker_threads() {
    int n = g_override.load(std::memory_order_relaxed);
    if (n > 0) return n;
    n = env_threads();
    if (n > 0) return n;
    n = static_cast<int>(std::thread::hardware_concurrency());
    return n > 0 ? n : 1;
}

void set_worker_threads(int n) { g_override.store(n > 0 ? n : 0, std::memory_order_relaxed); }

void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    std::size_t workers = std::min<std::size_t>(worker_threads(), n);
    if (workers <= 1) {
        fn(0, n);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(workers);
    std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        std::size_t begin = w * chunk;
        std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        threads.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    for (auto& t : threads) t.join();
}

double pairwise_sum(std::span<const double> values) {
    if (values.empty()) return 0.0;
    if (values.size() <= 8) {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
    std::size_t half = values.size() / 2;
    return pairwise_sum(values.subspan(0, half)) + pairwise_sum(values.subspan(half));
}

}  // namespace shlight
