#pragma once

#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace nnsym::detail {

/// Runs fn(worker_index) on `count` threads; exceptions thrown inside a
/// worker are captured and rethrown on the calling thread after the join.
template <typename Fn>
void run_workers(std::size_t count, Fn&& fn) {
    std::vector<std::exception_ptr> errors(count);
    std::vector<std::thread> threads;
    threads.reserve(count);
    for (std::size_t w = 0; w < count; ++w)
        threads.emplace_back([&errors, &fn, w] {
            try {
                fn(w);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace nnsym::detail
