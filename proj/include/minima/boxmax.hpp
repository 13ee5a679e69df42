#pragma once
// Inexact maximization of a smooth function over an axis-aligned box, plus an
// exhaustive vertex oracle for convex quadratics.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace minima::boxmax {

struct Box {
  std::vector<double> lower;
  std::vector<double> upper;

  std::size_t size() const { return lower.size(); }
  /// Throws unless lower <= upper entrywise and everything is finite.
  void validate() const;
  bool contains(std::span<const double> z) const;
};

/// Counts calls and rejects non-finite values or gradients.
class ObjectiveOracle {
 public:
  /// fn(z, grad) returns f(z) and writes the gradient into grad.
  using Fn = std::function<double(std::span<const double>, std::span<double>)>;

  ObjectiveOracle(std::size_t dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {}

  double operator()(std::span<const double> z, std::span<double> grad);
  std::size_t dim() const { return dim_; }
  std::size_t calls() const { return calls_; }

 private:
  std::size_t dim_;
  Fn fn_;
  std::size_t calls_ = 0;
};

/// 0.5 z'Hz + g'z + c with H stored row-major.
struct QuadraticObjective {
  std::size_t dim = 0;
  std::vector<double> hessian;
  std::vector<double> linear;
  double constant = 0.0;

  void validate() const;
  double value(std::span<const double> z) const;
  void gradient(std::span<const double> z, std::span<double> out) const;
  ObjectiveOracle oracle() const;
};

/// Entrywise clamp into the box.
std::vector<double> project(std::span<const double> z, const Box& box);

struct SolverOptions {
  std::size_t max_outer = 10;
  std::size_t memory = 10;
  double armijo = 1e-4;
  std::size_t max_halvings = 30;
  double pg_tolerance = 1e-8;
  /// Relative size (in units of the box half-width) of the probe taken when
  /// the starting point is already first-order stationary. 0 disables it.
  double stationary_probe = 1e-3;
  std::uint64_t probe_seed = 0x9e3779b97f4a7c15ULL;
};

struct Diagnostics {
  std::size_t iterations = 0;
  std::size_t oracle_calls = 0;
  double projected_grad_norm = 0.0;
  std::size_t line_search_failures = 0;
  std::size_t fallback_steps = 0;
  bool stationary_start_probed = false;
  bool converged = false;
};

struct MaxResult {
  std::vector<double> z;
  double value = 0.0;
  Diagnostics diagnostics;
};

/// Gradient projection to fix the active bounds, a limited-memory BFGS step
/// on the free coordinates, projected Armijo backtracking. Returns the best
/// point seen. z0 must lie in the box.
MaxResult maximize(ObjectiveOracle& oracle, const Box& box, std::span<const double> z0,
                   const SolverOptions& options = {});

/// Exact box maximum of a convex quadratic by enumerating all 2^p vertices
/// (Gray-code order). p <= 20.
MaxResult vertex_bruteforce_max(const QuadraticObjective& q, const Box& box);

}  // namespace minima::boxmax
