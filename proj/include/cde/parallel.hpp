#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cde::exec {

/// Process-wide switch between the OpenMP kernels and the serial reference
/// path. Tests flip this to compare both implementations on identical inputs.
bool parallel_enabled();
void set_parallel(bool on);
int max_threads();

/// Applies f(i) for i in [0, n). Iterations must write to disjoint slots;
/// results are then identical for the serial and parallel paths. An exception
/// thrown by any iteration is captured and rethrown after the loop.
template <typename F>
void parallel_for(std::int64_t n, F&& f) {
#ifdef _OPENMP
    if (parallel_enabled() && n > 1) {
        std::exception_ptr error;
        std::mutex error_mutex;
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
            try {
                f(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
        if (error) std::rethrow_exception(error);
        return;
    }
#endif
    for (std::int64_t i = 0; i < n; ++i) f(i);
}

}  // namespace cde::exec
