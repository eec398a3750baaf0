#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace fhtriage::detail {

/// Runs body(chunk_index, begin, end) over [0, n) split into contiguous
/// chunks, one per worker. Chunk boundaries depend only on n and jobs.
template <typename Body>
void parallel_chunks(std::size_t n, std::size_t jobs, Body&& body) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    body(std::size_t{0}, std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(jobs);
  const std::size_t step = (n + jobs - 1) / jobs;
  for (std::size_t c = 0; c < jobs; ++c) {
    const std::size_t begin = std::min(n, c * step);
    const std::size_t end = std::min(n, begin + step);
    workers.emplace_back([&, c, begin, end] {
      try {
        body(c, begin, end);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace fhtriage::detail
