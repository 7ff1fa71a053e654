#pragma once

#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace covscan {

namespace detail {
inline int read_env_threads() {
    const char* env = std::getenv("COVSCAN_THREADS");
    if (env) {
        int v = std::atoi(env);
        if (v >= 1) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

inline int& max_threads_ref() {
    static int value = read_env_threads();
    return value;
}

// set while executing inside a worker; nested parallel_for runs serially
inline bool& in_worker_flag() {
    thread_local bool flag = false;
    return flag;
}
}  // namespace detail

inline int max_threads() { return detail::max_threads_ref(); }

inline void set_max_threads(int t) { detail::max_threads_ref() = t < 1 ? 1 : t; }

// Runs fn(0..count-1), split into contiguous chunks across at most
// max_threads() threads. Work items must be independent; callers write
// results into pre-sized slots so the outcome does not depend on the
// thread count.
inline void parallel_for(std::ptrdiff_t count,
                         const std::function<void(std::ptrdiff_t)>& fn) {
    if (count <= 0) return;
    int nthreads = max_threads();
    if (nthreads > count) nthreads = static_cast<int>(count);
    if (nthreads <= 1 || detail::in_worker_flag()) {
        for (std::ptrdiff_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(nthreads));
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (int t = 0; t < nthreads; ++t) {
        const std::ptrdiff_t lo = count * t / nthreads;
        const std::ptrdiff_t hi = count * (t + 1) / nthreads;
        pool.emplace_back([&, lo, hi]() {
            detail::in_worker_flag() = true;
            try {
                for (std::ptrdiff_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
            detail::in_worker_flag() = false;
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace covscan
