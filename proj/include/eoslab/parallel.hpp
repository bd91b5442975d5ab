#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <thread>
#include <vector>

#include "eoslab/errors.hpp"
#include "eoslab/rng.hpp"

namespace eoslab {

/// Per-task random stream. Each (cell, seed) pair gets its own stream id, so
/// results do not depend on which worker ran the task.
[[nodiscard]] inline RngSpec seed_derivation(std::uint64_t base_seed, std::uint64_t cell_index,
                                             std::uint64_t seed_index) {
    constexpr std::uint64_t kLimit = std::uint64_t{1} << 32;
    if (cell_index >= kLimit || seed_index >= kLimit)
        throw InvalidInput("seed_derivation: indices must be below 2^32");
    return {base_seed, (cell_index << 32) | seed_index};
}

/// Runs fn(0..n-1) on up to `workers` threads and returns results by index.
/// If any task throws, the exception of the lowest failing index is rethrown
/// after all workers have joined.
template <class Fn>
[[nodiscard]] auto parallel_map(std::size_t n, std::size_t workers, Fn&& fn)
    -> std::vector<decltype(fn(std::size_t{}))> {
    using R = decltype(fn(std::size_t{}));
    if (workers == 0) throw InvalidInput("parallel_map: workers must be positive");
    std::vector<std::optional<R>> slots(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= n) return;
            try {
                slots[i].emplace(fn(i));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };

    const std::size_t nthreads = std::min(workers, std::max<std::size_t>(n, 1));
    if (nthreads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(nthreads);
        for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    }

    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::vector<R> out;
    out.reserve(n);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

}  // namespace eoslab
