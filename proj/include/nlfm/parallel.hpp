#pragma once

#include <cstddef>
#include <functional>

namespace nlfm {

/// Worker thread count used by the chunked loops below. Chunk boundaries
/// depend only on the problem size, and chunk partials are always combined
/// in chunk order, so results are bit-identical for any thread count.
void set_num_threads(int n);
int num_threads();

/// When set, wall-clock columns in traces and summaries are emitted as 0
/// (reproducibility testing).
void set_fixed_clock(bool on);
bool fixed_clock();

/// Chunk size used for sample reductions: at most ~64 chunks, never tiny.
std::ptrdiff_t reduce_chunk_size(std::ptrdiff_t n);

/// Invoke body(chunk_index, lo, hi) over the fixed chunk grid of [0, n).
/// Chunks may run on any thread; bodies must only write chunk-local state.
void parallel_chunks(std::ptrdiff_t n, std::ptrdiff_t chunk_size,
                     const std::function<void(std::ptrdiff_t, std::ptrdiff_t, std::ptrdiff_t)>& body);

/// Deterministic sum: per-chunk partials combined in chunk order.
double chunked_sum(std::ptrdiff_t n, std::ptrdiff_t chunk_size,
                   const std::function<double(std::ptrdiff_t, std::ptrdiff_t)>& partial);

}  // namespace nlfm
