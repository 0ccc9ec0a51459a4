#include "nlfm/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace nlfm {

namespace {
std::atomic<int> g_threads{1};
std::atomic<bool> g_fixed_clock{false};
}  // namespace

void set_num_threads(int n) { g_threads.store(n < 1 ? 1 : n); }
int num_threads() { return g_threads.load(); }

void set_fixed_clock(bool on) { g_fixed_clock.store(on); }
bool fixed_clock() { return g_fixed_clock.load(); }

std::ptrdiff_t reduce_chunk_size(std::ptrdiff_t n) {
  const std::ptrdiff_t by_count = (n + 63) / 64;
  return std::max<std::ptrdiff_t>(1024, by_count);
}

void parallel_chunks(std::ptrdiff_t n, std::ptrdiff_t chunk_size,
                     const std::function<void(std::ptrdiff_t, std::ptrdiff_t, std::ptrdiff_t)>& body) {
  if (n <= 0) return;
  const std::ptrdiff_t n_chunks = (n + chunk_size - 1) / chunk_size;
  const int workers = std::min<std::ptrdiff_t>(num_threads(), n_chunks);
  if (workers <= 1) {
    for (std::ptrdiff_t c = 0; c < n_chunks; ++c)
      body(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
    return;
  }
  std::atomic<std::ptrdiff_t> next{0};
  auto run = [&] {
    for (;;) {
      const std::ptrdiff_t c = next.fetch_add(1);
      if (c >= n_chunks) break;
      body(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (int w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& th : pool) th.join();
}

double chunked_sum(std::ptrdiff_t n, std::ptrdiff_t chunk_size,
                   const std::function<double(std::ptrdiff_t, std::ptrdiff_t)>& partial) {
  if (n <= 0) return 0.0;
  const std::ptrdiff_t n_chunks = (n + chunk_size - 1) / chunk_size;
  std::vector<double> partials(n_chunks, 0.0);
  parallel_chunks(n, chunk_size, [&](std::ptrdiff_t c, std::ptrdiff_t lo, std::ptrdiff_t hi) {
    partials[c] = partial(lo, hi);
  });
  double total = 0.0;
  for (double p : partials) total += p;
  return total;
}

}  // namespace nlfm
