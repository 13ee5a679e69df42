#pragma once
// Shared helpers for the unit and acceptance suites.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "minima/data.hpp"
#include "minima/matrix.hpp"
#include "minima/net.hpp"
#include "minima/rng.hpp"

namespace testing {

using minima::Matrix;
using minima::Rng;
namespace net = minima::net;

inline double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double rel_error(std::span<const double> a, std::span<const double> b) {
  double num = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) num += (a[i] - b[i]) * (a[i] - b[i]);
  const double den = std::max({norm2(a), norm2(b), 1e-300});
  return std::sqrt(num) / den;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = scale * rng.normal();
  return m;
}

inline std::vector<int> random_labels(std::size_t rows, std::size_t classes, Rng& rng) {
  std::vector<int> out(rows);
  for (int& l : out) l = static_cast<int>(rng.index(classes));
  return out;
}

/// Random MLP with at most ~2000 parameters.
inline net::NetworkSpec random_spec(Rng& rng, bool batchnorm) {
  const std::size_t in = 2 + rng.index(7);
  const std::size_t depth = 1 + rng.index(2);
  std::vector<std::size_t> hidden;
  for (std::size_t i = 0; i < depth; ++i) hidden.push_back(3 + rng.index(14));
  const std::size_t classes = 2 + rng.index(4);
  return net::mlp(in, hidden, classes, batchnorm);
}

/// Perturbs BatchNorm scale/shift and biases away from their initial values
/// so every parameter group has a nontrivial gradient.
inline void jitter(net::ParamVector& p, Rng& rng) {
  for (double& v : p.values) v += 0.1 * rng.normal();
}

/// Central differences with h = 1e-5 (1 + |x_i|).
template <class F>
std::vector<double> fd_gradient(std::vector<double> x, F&& f) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    const double h = 1e-5 * (1.0 + std::abs(xi));
    x[i] = xi + h;
    const double fp = f(x);
    x[i] = xi - h;
    const double fm = f(x);
    x[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace testing
