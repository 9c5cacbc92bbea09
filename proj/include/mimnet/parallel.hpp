#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

namespace mimnet {

enum class Execution { serial, parallel };

/// Runs f(i) for i in [0, n). The parallel path distributes indices over
/// OpenMP threads; the first exception thrown by any index is rethrown here.
template <class F>
void for_each_index(std::size_t n, Execution exec, F&& f) {
  if (exec == Execution::serial) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex guard;
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      f(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard lock(guard);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace mimnet
