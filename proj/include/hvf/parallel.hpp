#ifndef HVF_PARALLEL_HPP
#define HVF_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace hvf {

/// Worker cap shared by every module; the CLI sets it from --jobs.
inline unsigned& default_jobs()
{
    static unsigned jobs = 1;
    return jobs;
}

/// Runs body(i) for i in [0, count) on up to `jobs` threads. Exceptions from
/// any worker are rethrown on the calling thread (the first one wins).
template <class Body>
void parallel_for(std::size_t count, unsigned jobs, Body&& body)
{
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    if (jobs == 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < jobs; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

template <class Body>
void parallel_for(std::size_t count, Body&& body)
{
    parallel_for(count, default_jobs(), std::forward<Body>(body));
}

} // namespace hvf

#endif
