#include "minima/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "minima/kernels.hpp"

namespace minima::parallel {
namespace {

std::atomic<std::size_t> g_threads{1};
thread_local bool t_in_worker = false;

}  // namespace

void set_threads(std::size_t n) { g_threads.store(std::max<std::size_t>(1, n)); }

std::size_t threads() { return g_threads.load(); }

void for_each(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(threads(), n);
  if (workers <= 1 || t_in_worker) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto run = [&] {
    t_in_worker = true;
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) break;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next.store(n);
      }
    }
    t_in_worker = false;
  };

  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

std::vector<double> reduce_rows(std::size_t rows, std::size_t width,
                                const std::function<void(std::size_t, std::size_t,
                                                         std::span<double>)>& fn) {
  // Blocks are computed a wave at a time and folded into a binary counter:
  // merging equal-level partials in block order, then collapsing the stack
  // from the top, reproduces tree_reduce's pairing with O(wave + log) buffers.
  constexpr std::size_t kWave = 16;
  const std::size_t blocks = std::max<std::size_t>(1, (rows + kRowBlock - 1) / kRowBlock);

  struct Level {
    std::size_t level;
    std::vector<double> sum;
  };
  std::vector<Level> stack;
  std::vector<std::vector<double>> wave;

  for (std::size_t first = 0; first < blocks; first += kWave) {
    const std::size_t count = std::min(kWave, blocks - first);
    wave.resize(count);
    for (auto& w : wave) w.assign(width, 0.0);
    for_each(count, [&](std::size_t k) {
      const std::size_t begin = (first + k) * kRowBlock;
      const std::size_t end = std::min(rows, begin + kRowBlock);
      if (begin < end) fn(begin, end, wave[k]);
    });
    for (auto& w : wave) {
      Level item{0, std::move(w)};
      while (!stack.empty() && stack.back().level == item.level) {
        kernels::add(item.sum, stack.back().sum);
        item.sum = std::move(stack.back().sum);
        item.level += 1;
        stack.pop_back();
      }
      stack.push_back(std::move(item));
    }
  }
  while (stack.size() > 1) {
    Level top = std::move(stack.back());
    stack.pop_back();
    kernels::add(top.sum, stack.back().sum);
  }
  return std::move(stack.front().sum);
}

double pairwise_sum(std::span<const double> values) {
  if (values.empty()) return 0.0;
  const std::size_t blocks = (values.size() + kRowBlock - 1) / kRowBlock;
  std::vector<double> parts(blocks, 0.0);
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t end = std::min(values.size(), (b + 1) * kRowBlock);
    for (std::size_t i = b * kRowBlock; i < end; ++i) parts[b] += values[i];
  }
  tree_reduce(parts, [](double& dst, double src) { dst += src; });
  return parts.front();
}

}  // namespace minima::parallel
