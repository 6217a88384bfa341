#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace hfl {

/// Process-wide worker count used by Monte Carlo loops (1 = sequential).
inline std::atomic<unsigned>& worker_threads() {
    static std::atomic<unsigned> n{1};
    return n;
}

/// Runs body(i) for i in [0, count). Each index writes only its own output slot, so results
/// are identical to sequential execution. The first exception (lowest index) is rethrown.
template <class Body>
void parallel_for(std::size_t count, Body&& body) {
    const unsigned threads = std::max(1u, std::min<unsigned>(worker_threads().load(), static_cast<unsigned>(count)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    std::size_t error_index = count;
    {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < count; i = next++) {
                    try {
                        body(i);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (i < error_index) {
                            error_index = i;
                            error = std::current_exception();
                        }
                    }
                }
            });
        }
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace hfl
