#include "cerf/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace cerf {

namespace {

std::atomic<int> g_limit{0};

int default_limit() {
    if (const char* env = std::getenv("CERF_THREADS")) {
        const int value = std::atoi(env);
        if (value > 0) return value;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace

void set_thread_limit(int threads) { g_limit.store(std::max(threads, 0)); }

int thread_limit() {
    const int limit = g_limit.load();
    return limit > 0 ? limit : default_limit();
}

void parallel_for(std::size_t count, const std::function<void(std::size_t, std::size_t)>& body) {
    if (count == 0) return;
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(thread_limit()), count);
    if (workers <= 1 || count < 64) {
        body(0, count);
        return;
    }
    const std::size_t chunk = (count + workers - 1) / workers;
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(count, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&, w, begin, end] {
            try {
                body(begin, end);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace cerf
