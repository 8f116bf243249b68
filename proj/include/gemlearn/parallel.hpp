#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace gemlearn {

/// Runs f(unit, worker) for unit in [0, units) on up to `workers` threads.
/// Units are claimed dynamically; callers place results by unit index so the
/// output does not depend on scheduling. workers <= 1 runs inline.
template <class F>
void parallel_for(std::size_t units, unsigned workers, F&& f) {
    if (units == 0) return;
    const unsigned n = static_cast<unsigned>(std::min<std::size_t>(std::max(workers, 1u), units));
    if (n == 1) {
        for (std::size_t u = 0; u < units; ++u) f(u, 0u);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto body = [&](unsigned worker) {
        try {
            for (std::size_t u = next.fetch_add(1); u < units; u = next.fetch_add(1)) f(u, worker);
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next.store(units);
        }
    };
    std::vector<std::jthread> threads;
    threads.reserve(n - 1);
    for (unsigned w = 1; w < n; ++w) threads.emplace_back(body, w);
    body(0);
    threads.clear();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace gemlearn
