#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dave {

inline void check_arg(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

inline void check_state(bool ok, const std::string& msg) {
    if (!ok) throw std::runtime_error(msg);
}

// splitmix64; used to derive independent per-purpose / per-sample seeds
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix_seed(mix_seed(a, b), c);
}

namespace runtime {

inline std::atomic<int>& thread_slot() {
    static std::atomic<int> n{0};  // 0 = auto
    return n;
}

inline int num_threads() {
    int n = thread_slot().load(std::memory_order_relaxed);
    if (n > 0) return n;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw > 8 ? 8 : hw);
}

inline void set_num_threads(int n) { thread_slot().store(n < 1 ? 1 : n); }

inline std::atomic<bool>& deterministic_slot() {
    static std::atomic<bool> f{false};
    return f;
}

inline bool deterministic() { return deterministic_slot().load(std::memory_order_relaxed); }

// Deterministic mode forces sequential execution everywhere.
inline void set_deterministic(bool on) {
    deterministic_slot().store(on);
    if (on) set_num_threads(1);
}

}  // namespace runtime

// Runs f(begin, end, chunk_index) over [0, n) split into contiguous chunks,
// one per worker. Chunk boundaries depend only on the thread count, so any
// caller that reduces per-chunk buffers in chunk order gets reproducible
// results for a fixed thread count.
template <typename F>
void parallel_chunks(std::int64_t n, F&& f) {
    if (n <= 0) return;
    int workers = runtime::num_threads();
    if (workers > n) workers = static_cast<int>(n);
    if (workers <= 1) {
        f(std::int64_t{0}, n, 0);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers - 1));
    std::int64_t base = n / workers, rem = n % workers;
    std::int64_t begin = 0;
    for (int c = 0; c < workers; ++c) {
        std::int64_t end = begin + base + (c < rem ? 1 : 0);
        if (c + 1 == workers) {
            f(begin, end, c);
        } else {
            pool.emplace_back([&f, begin, end, c] { f(begin, end, c); });
        }
        begin = end;
    }
    for (auto& t : pool) t.join();
}

// Dense 2-D float grid; the common currency of heatmaps and score maps.
struct Grid {
    int h = 0, w = 0;
    std::vector<float> v;

    Grid() = default;
    Grid(int h_, int w_, float fill = 0.f) : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, fill) {}

    float& at(int r, int c) { return v[static_cast<std::size_t>(r) * w + c]; }
    float at(int r, int c) const { return v[static_cast<std::size_t>(r) * w + c]; }
    std::size_t size() const { return v.size(); }
};

}  // namespace dave
