#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace critsamp {

/// Runs fn(begin, end) over `threads` contiguous slices of [0, count). Each slice
/// writes only its own outputs, so results do not depend on the thread count.
/// The first exception thrown by any slice is rethrown.
template <class Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, count));
    if (threads == 1) {
        if (count > 0) fn(std::size_t{0}, count);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t t = 0; t < threads; ++t) {
        const std::size_t lo = count * t / threads;
        const std::size_t hi = count * (t + 1) / threads;
        pool.emplace_back([&, t, lo, hi] {
            try {
                fn(lo, hi);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace critsamp
