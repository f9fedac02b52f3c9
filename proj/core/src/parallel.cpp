#include "rulehte/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace rulehte {

void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
    if (count <= 0) return;
    if (jobs <= 1 || count == 1) {
        for (int k = 0; k < count; ++k) fn(k);
        return;
    }
    std::atomic<int> next{0};
    std::mutex mu;
    int failed_index = count;
    std::exception_ptr failure;
    auto worker = [&] {
        for (int k = next++; k < count; k = next++) {
            try {
                fn(k);
            } catch (...) {
                std::lock_guard lock(mu);
                if (k < failed_index) {
                    failed_index = k;
                    failure = std::current_exception();
                }
            }
        }
    };
    const int n_threads = std::min(jobs, count);
    std::vector<std::thread> pool;
    pool.reserve(n_threads - 1);
    for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

int default_jobs() {
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace rulehte
