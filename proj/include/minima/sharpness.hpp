#pragma once
// (C_eps, A)-sharpness: the largest relative rise of f over the box
//   { x + A y : |y_i| <= eps (|(A^+ x)_i| + 1) }
// in percent, found with the bounded quasi-Newton solver of boxmax.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "minima/boxmax.hpp"
#include "minima/data.hpp"
#include "minima/matrix.hpp"
#include "minima/net.hpp"

namespace minima::sharpness {

enum class SubspaceKind { FullSpace, Random, Explicit };

struct SubspaceSpec {
  SubspaceKind kind = SubspaceKind::FullSpace;
  std::size_t p = 0;
  std::uint64_t seed = 0;       // requested seed (Random only)
  std::uint64_t used_seed = 0;  // seed actually used after rank retries
  Matrix basis;                 // n x p; empty for FullSpace

  static SubspaceSpec full_space();
  /// i.i.d. standard normal n x p matrix. Regenerated with seed+1, seed+2, ...
  /// if it is not of full column rank.
  static SubspaceSpec random(std::size_t n, std::size_t p, std::uint64_t seed);
  static SubspaceSpec explicit_basis(Matrix basis);

  /// Number of free coordinates y for a parameter vector of length n.
  std::size_t dim(std::size_t n) const;
  std::string name() const;

  /// out = x + A y  (or x + y).
  void lift(std::span<const double> x, std::span<const double> y, std::span<double> out) const;
  /// out = A' g  (or g).
  void pull_back(std::span<const double> g, std::span<double> out) const;
};

/// A^+ x through the normal equations (A'A) w = A' x: pivoted Cholesky first,
/// column-pivoted QR of A when that fails. RankError if A is rank deficient.
std::vector<double> pseudo_inverse_apply(const Matrix& a, std::span<const double> x);

/// Symmetric box with half-widths eps (|(A^+ x)_i| + 1).
boxmax::Box build_box(const SubspaceSpec& subspace, std::span<const double> x, double eps);

/// f(w, grad) returns f(w) and writes its gradient.
using Objective = std::function<double(std::span<const double>, std::span<double>)>;

struct Options {
  std::size_t max_outer = 10;
  std::size_t memory = 10;
  std::size_t restarts = 0;
  std::uint64_t restart_seed = 0;
};

struct Report {
  double phi = 0.0;
  double epsilon = 0.0;
  SubspaceKind kind = SubspaceKind::FullSpace;
  std::size_t p = 0;
  std::uint64_t subspace_seed = 0;
  double f_at_x = 0.0;
  double max_value_found = 0.0;
  boxmax::Diagnostics diagnostics;
};

double phi_from(double max_value, double f_at_x);

Report sharpness(const Objective& f, std::span<const double> x, double eps, const SubspaceSpec& subspace,
                 const Options& options = {});

/// Exact value for convex quadratic f, by enumerating the vertices of the
/// reduced problem y -> f(x + A y) (needs dim <= 20).
Report sharpness_exact_quadratic(const boxmax::QuadraticObjective& q, std::span<const double> x, double eps,
                                 const SubspaceSpec& subspace);

/// Full-training-set mean cross-entropy in Eval mode with `stats` frozen.
Objective network_objective(const net::Network& network, const net::RunningStats& stats,
                            const data::Dataset& train_set);

}  // namespace minima::sharpness
