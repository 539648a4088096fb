#ifndef FMCB_PARALLEL_H_
#define FMCB_PARALLEL_H_

#include <cstddef>
#include <functional>
#include <vector>

namespace fmcb {

// Caps the number of threads used by data-parallel sections. Values <= 0
// select std::thread::hardware_concurrency().
void set_thread_count(int threads);
int thread_count();

// Calls fn(chunk, begin, end) for every chunk of [0, n) of size chunk_size
// (the last chunk may be shorter). The chunk layout is a function of n and
// chunk_size only, so any per-chunk partial results combined in chunk order
// are identical for every thread count.
void parallel_chunks(std::size_t n, std::size_t chunk_size,
                     const std::function<void(std::size_t chunk, std::size_t begin,
                                              std::size_t end)>& fn);

inline std::size_t chunk_count(std::size_t n, std::size_t chunk_size) {
  return (n + chunk_size - 1) / chunk_size;
}

// Deterministic sum: per-chunk partial sums, then an ordered combine.
double ordered_sum(std::size_t n, std::size_t chunk_size,
                   const std::function<double(std::size_t begin, std::size_t end)>& partial);

inline constexpr std::size_t kRowChunk = 2048;

}  // namespace fmcb

#endif  // FMCB_PARALLEL_H_
