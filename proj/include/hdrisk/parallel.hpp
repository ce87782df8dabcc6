#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace hdrisk::parallel {

namespace detail {
inline std::atomic<int>& thread_count_slot() {
    static std::atomic<int> count{0}; // 0 = use hardware_concurrency
    return count;
}
inline thread_local bool inside_worker = false;
} // namespace detail

inline void set_thread_count(int n) { detail::thread_count_slot().store(n); }

inline int thread_count() {
    int n = detail::thread_count_slot().load();
    if (n > 0) return n;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, count).  Work is claimed one index at a time from a
// shared counter, so schedules differ between runs -- callers must write
// results into index-addressed slots, which keeps output independent of
// thread interleaving.  Nested calls run serially to avoid oversubscription.
// The first exception thrown by any worker is rethrown here after join.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
    const int workers = thread_count();
    if (workers <= 1 || count <= 1 || detail::inside_worker) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto body = [&] {
        detail::inside_worker = true;
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= count || failed.load(std::memory_order_relaxed)) break;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true, std::memory_order_relaxed);
                break;
            }
        }
        detail::inside_worker = false;
    };
    std::vector<std::thread> pool;
    const std::size_t spawn = std::min<std::size_t>(workers, count);
    pool.reserve(spawn);
    for (std::size_t t = 0; t < spawn; ++t) pool.emplace_back(body);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace hdrisk::parallel
