#pragma once
// Dense inner-loop kernels.
//
// Every kernel has a scalar reference implementation and, on x86-64, an AVX2
// variant. The active table is chosen once at startup from CPUID (override
// with MINIMA_ISA=scalar|avx2 or force_isa()). Elementwise kernels are
// bit-identical across variants; dot() reassociates the sum and agrees with
// the reference to rounding only.

#include <cstddef>
#include <span>
#include <string_view>

namespace minima::kernels {

enum class Isa { Scalar, Avx2 };

struct KernelTable {
  Isa isa;
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // out = a * x + b * y
  void (*axpby)(double a, const double* x, double b, const double* y, double* out,
                std::size_t n);
  // y += x
  void (*add)(const double* x, double* y, std::size_t n);
  // x *= a
  void (*scale)(double a, double* x, std::size_t n);
  // out = min(max(x, lo), hi)
  void (*clamp)(const double* x, const double* lo, const double* hi, double* out,
                std::size_t n);
  // x = max(x, 0)
  void (*relu)(double* x, std::size_t n);
  // g = (act > 0) ? g : 0
  void (*relu_backward)(const double* act, double* g, std::size_t n);
  double (*max_abs)(const double* x, std::size_t n);
  // m = b1*m + (1-b1)*g;  v = b2*v + (1-b2)*g*g;  x -= step * m / (sqrt(v) + eps)
  void (*adam_update)(double b1, double b2, double step, double eps, const double* g,
                      double* m, double* v, double* x, std::size_t n);
};

namespace scalar {
const KernelTable& table();
}

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
const KernelTable& table();
}
#endif

bool isa_supported(Isa isa);
const KernelTable& table_for(Isa isa);

/// Currently dispatched table.
const KernelTable& active();
Isa active_isa();
std::string_view isa_name(Isa isa);

/// Switch the dispatched table (tests, benchmarking). Throws if unsupported.
void force_isa(Isa isa);

inline double dot(std::span<const double> x, std::span<const double> y) {
  return active().dot(x.data(), y.data(), x.size());
}
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  active().axpy(a, x.data(), y.data(), x.size());
}
inline void add(std::span<const double> x, std::span<double> y) {
  active().add(x.data(), y.data(), x.size());
}
inline void scale(double a, std::span<double> x) { active().scale(a, x.data(), x.size()); }
inline double max_abs(std::span<const double> x) { return active().max_abs(x.data(), x.size()); }

}  // namespace minima::kernels
