#ifndef POINTDN_PARALLEL_HPP
#define POINTDN_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace pointdn {

namespace detail {
inline std::atomic<int>& thread_override() {
    static std::atomic<int> value{0};
    return value;
}

// Set inside pool workers; nested parallel_for calls then run inline.
inline bool& inside_worker() {
    thread_local bool value = false;
    return value;
}
}  // namespace detail

// Explicit count wins, then POINTDN_THREADS, then the hardware.
inline void set_thread_count(int count) { detail::thread_override() = std::max(0, count); }

inline int thread_count() {
    if (int forced = detail::thread_override(); forced > 0) return forced;
    if (const char* env = std::getenv("POINTDN_THREADS")) {
        try {
            const int value = std::stoi(env);
            if (value > 0) return value;
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, count). Work is split statically; if any call
/// throws, the exception with the smallest index is rethrown after all
/// workers finish, so failures are reported deterministically.
template <class Fn>
void parallel_for(int count, Fn&& fn) {
    if (count <= 0) return;
    const int workers = detail::inside_worker() ? 1 : std::min(thread_count(), count);
    std::vector<std::exception_ptr> errors(count);
    auto run = [&](int worker) {
        for (int i = worker; i < count; i += workers) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (workers == 1) {
        run(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&run, w] {
                detail::inside_worker() = true;
                run(w);
            });
        }
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace pointdn

#endif  // POINTDN_PARALLEL_HPP
