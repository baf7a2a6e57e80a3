#include "gs4d/parallel.hpp"

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include <cstdlib>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

namespace gs4d {

namespace {

int default_threads() {
    if (const char* env = std::getenv("GS4D_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n > 0) return n;
        } catch (...) {
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

struct ArenaHolder {
    std::mutex mutex;
    int threads = 0;
    std::unique_ptr<tbb::task_arena> arena;
};

ArenaHolder& holder() {
    static ArenaHolder h;
    return h;
}

tbb::task_arena& arena() {
    auto& h = holder();
    std::lock_guard lock(h.mutex);
    if (!h.arena) {
        if (h.threads <= 0) h.threads = default_threads();
        h.arena = std::make_unique<tbb::task_arena>(h.threads);
    }
    return *h.arena;
}

} // namespace

void set_num_threads(int n) {
    auto& h = holder();
    std::lock_guard lock(h.mutex);
    h.threads = n > 0 ? n : default_threads();
    h.arena.reset();
}

int num_threads() {
    auto& h = holder();
    std::lock_guard lock(h.mutex);
    return h.threads > 0 ? h.threads : default_threads();
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t grain) {
    if (n == 0) return;
    if (num_threads() == 1 || n <= grain) {
        body(0, n);
        return;
    }
    arena().execute([&] {
        tbb::parallel_for(tbb::blocked_range<std::size_t>(0, n, grain),
                          [&](const tbb::blocked_range<std::size_t>& r) { body(r.begin(), r.end()); });
    });
}

} // namespace gs4d
