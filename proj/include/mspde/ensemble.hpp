#pragma once

// Path-parallel execution. Each Monte Carlo path is an independent unit of
// work; results are stored by path index so every reduction downstream runs
// in path order and is bit-identical for any worker count.

#include <cstddef>
#include <exception>
#include <optional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mspde {

/// Worker count used by run_paths when none is given (0 = OpenMP default).
inline int& default_workers() {
  static int workers = 0;
  return workers;
}

inline int available_workers() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

/// Serial reference: fn(path) for path = 0..paths-1.
template <class Fn>
auto run_paths_serial(std::size_t paths, Fn&& fn) {
  using Result = decltype(fn(std::size_t{0}));
  std::vector<Result> out;
  out.reserve(paths);
  for (std::size_t p = 0; p < paths; ++p) out.push_back(fn(p));
  return out;
}

/// OpenMP version of run_paths_serial. The first exception thrown by any
/// path is rethrown after the parallel region.
template <class Fn>
auto run_paths(std::size_t paths, Fn&& fn, int workers = 0) {
  using Result = decltype(fn(std::size_t{0}));
#ifdef _OPENMP
  if (workers <= 0) workers = default_workers();
  if (workers <= 0) workers = omp_get_max_threads();
  if (workers == 1 || paths < 2) return run_paths_serial(paths, fn);

  std::vector<std::optional<Result>> slots(paths);
  std::exception_ptr failure;
  const long long n = static_cast<long long>(paths);
#pragma omp parallel for schedule(dynamic) num_threads(workers)
  for (long long p = 0; p < n; ++p) {
    try {
      slots[static_cast<std::size_t>(p)].emplace(fn(static_cast<std::size_t>(p)));
    } catch (...) {
#pragma omp critical(mspde_run_paths_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<Result> out;
  out.reserve(paths);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
#else
  (void)workers;
  return run_paths_serial(paths, fn);
#endif
}

}  // namespace mspde
