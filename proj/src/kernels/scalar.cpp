#include "minima/kernels.hpp"

#include <cmath>

namespace minima::kernels::scalar {
namespace {

double dot(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void axpby(double a, const double* x, double b, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void add(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

void scale(double a, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void clamp(const double* x, const double* lo, const double* hi, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    // max then min, same operand order as the vector variant (NaN-propagation
    // of maxpd/minpd returns the second operand)
    double v = x[i] > lo[i] ? x[i] : lo[i];
    out[i] = v < hi[i] ? v : hi[i];
  }
}

void relu(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* act, double* g, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) g[i] = act[i] > 0.0 ? g[i] : 0.0;
}

double max_abs(const double* x, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double a = std::fabs(x[i]);
    m = a > m ? a : m;
  }
  return m;
}

void adam_update(double b1, double b2, double step, double eps, const double* g, double* m,
                 double* v, double* x, std::size_t n) {
  const double c1 = 1.0 - b1;
  const double c2 = 1.0 - b2;
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = b1 * m[i] + c1 * g[i];
    v[i] = b2 * v[i] + c2 * (g[i] * g[i]);
    x[i] -= step * m[i] / (std::sqrt(v[i]) + eps);
  }
}

constexpr KernelTable kTable{Isa::Scalar, dot,  axpy,          axpby,   add,        scale,
                             clamp,       relu, relu_backward, max_abs, adam_update};

}  // namespace

const KernelTable& table() { return kTable; }

}  // namespace minima::kernels::scalar
