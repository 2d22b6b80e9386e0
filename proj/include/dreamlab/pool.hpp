#pragma once
// Minimal bounded worker pool. Results are written into caller-indexed
// slots, so the worker count changes wall time only, never output order.

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace dreamlab {

inline unsigned default_jobs() {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : hc;
}

inline void parallel_for(std::size_t n_tasks, unsigned jobs,
                         const std::function<void(std::size_t)>& task) {
    if (n_tasks == 0) return;
    if (jobs <= 1 || n_tasks == 1) {
        for (std::size_t i = 0; i < n_tasks; ++i) task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n_tasks) return;
            try {
                task(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> threads;
    const unsigned n_threads = static_cast<unsigned>(std::min<std::size_t>(jobs, n_tasks));
    threads.reserve(n_threads);
    for (unsigned t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace dreamlab
