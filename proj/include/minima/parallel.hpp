#pragma once
// Worker-count-independent parallel loops and reductions.
//
// Results never depend on how many threads run: work is cut into fixed blocks
// whose partial results are combined by a fixed pairwise tree.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace minima::parallel {

/// Rows per reduction block. Fixed so the summation tree does not change with
/// the thread count.
inline constexpr std::size_t kRowBlock = 32;

void set_threads(std::size_t n);
std::size_t threads();

/// Runs fn(i) for every i in [0, n). Calls made from inside a worker run
/// inline on that worker.
void for_each(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Combines parts[0..n) with a fixed pairwise tree; the result lands in parts[0].
template <class T, class Combine>
void tree_reduce(std::vector<T>& parts, Combine&& combine) {
  const std::size_t n = parts.size();
  for (std::size_t step = 1; step < n; step *= 2)
    for (std::size_t i = 0; i + step < n; i += 2 * step) combine(parts[i], parts[i + step]);
}

/// Sums a length-`width` partial over row blocks of a `rows`-row batch.
/// `fn(begin, end, partial)` accumulates rows [begin, end) into `partial`,
/// which arrives zero-filled.
std::vector<double> reduce_rows(std::size_t rows, std::size_t width,
                                const std::function<void(std::size_t, std::size_t,
                                                         std::span<double>)>& fn);

/// Pairwise sum of a sequence (same tree as reduce_rows over single values).
double pairwise_sum(std::span<const double> values);

}  // namespace minima::parallel
