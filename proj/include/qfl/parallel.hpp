#pragma once

#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace qfl {

/// Run fn(i) for i in [0, count) on up to `workers` threads.
///
/// Tasks must be independent (each writes only its own output slot);
/// results are then identical for every worker count. The first exception
/// thrown by any task is rethrown on the calling thread after all threads
/// join, so a failing task aborts the whole batch.
template <typename Fn>
void parallel_for(std::size_t count, int workers, Fn&& fn) {
    if (count == 0) return;
    const std::size_t nthreads =
        workers <= 1 ? 1 : std::min<std::size_t>(static_cast<std::size_t>(workers), count);
    if (nthreads == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }

    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(nthreads);
    pool.reserve(nthreads);
    for (std::size_t t = 0; t < nthreads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < count; i += nthreads) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& err : errors)
        if (err) std::rethrow_exception(err);
}

} // namespace qfl
