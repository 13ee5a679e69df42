#include "minima/boxmax.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <string>

#include "minima/errors.hpp"
#include "minima/kernels.hpp"
#include "minima/rng.hpp"

namespace minima::boxmax {

void Box::validate() const {
  if (lower.size() != upper.size()) throw ShapeError("box bounds have different lengths");
  for (std::size_t i = 0; i < lower.size(); ++i) {
    if (!std::isfinite(lower[i]) || !std::isfinite(upper[i])) throw DomainError("box bounds must be finite");
    if (lower[i] > upper[i]) throw DomainError("box lower bound exceeds upper bound at " + std::to_string(i));
  }
}

bool Box::contains(std::span<const double> z) const {
  if (z.size() != size()) return false;
  for (std::size_t i = 0; i < z.size(); ++i)
    if (!(z[i] >= lower[i] && z[i] <= upper[i])) return false;
  return true;
}

double ObjectiveOracle::operator()(std::span<const double> z, std::span<double> grad) {
  if (z.size() != dim_ || grad.size() != dim_) throw ShapeError("oracle called with wrong dimension");
  ++calls_;
  const double v = fn_(z, grad);
  bool ok = std::isfinite(v);
  for (double g : grad) ok = ok && std::isfinite(g);
  if (!ok) throw NumericError("objective returned a non-finite value or gradient", {}, {z.begin(), z.end()});
  return v;
}

void QuadraticObjective::validate() const {
  if (hessian.size() != dim * dim || linear.size() != dim) throw ShapeError("quadratic objective dimensions");
  double scale = 1.0;
  for (double h : hessian) scale = std::max(scale, std::fabs(h));
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = i + 1; j < dim; ++j)
      if (std::fabs(hessian[i * dim + j] - hessian[j * dim + i]) > 1e-12 * scale)
        throw DomainError("quadratic objective Hessian is not symmetric");
}

double QuadraticObjective::value(std::span<const double> z) const {
  double v = constant;
  for (std::size_t i = 0; i < dim; ++i) {
    const double hz = kernels::dot({hessian.data() + i * dim, dim}, z);
    v += z[i] * (0.5 * hz + linear[i]);
  }
  return v;
}

void QuadraticObjective::gradient(std::span<const double> z, std::span<double> out) const {
  for (std::size_t i = 0; i < dim; ++i) out[i] = kernels::dot({hessian.data() + i * dim, dim}, z) + linear[i];
}

ObjectiveOracle QuadraticObjective::oracle() const {
  validate();
  return ObjectiveOracle(dim, [q = *this](std::span<const double> z, std::span<double> g) {
    q.gradient(z, g);
    return q.value(z);
  });
}

std::vector<double> project(std::span<const double> z, const Box& box) {
  if (z.size() != box.size()) throw ShapeError("project: point and box dimensions differ");
  std::vector<double> out(z.size());
  kernels::active().clamp(z.data(), box.lower.data(), box.upper.data(), out.data(), z.size());
  return out;
}

namespace {

// Internally we minimize h = -f; `grad` below always means grad h.
struct Point {
  std::vector<double> z;
  double h = 0.0;
  std::vector<double> grad;
};

class Solver {
 public:
  Solver(ObjectiveOracle& oracle, const Box& box, const SolverOptions& opt)
      : oracle_(oracle), box_(box), opt_(opt), n_(box.size()) {}

  Point eval(std::vector<double> z) {
    Point p;
    p.grad.assign(n_, 0.0);
    p.h = -oracle_(z, p.grad);
    for (double& g : p.grad) g = -g;
    p.z = std::move(z);
    return p;
  }

  double projected_grad_norm(const Point& p) const {
    double m = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      const double moved = std::clamp(p.z[i] - p.grad[i], box_.lower[i], box_.upper[i]);
      m = std::max(m, std::fabs(moved - p.z[i]));
    }
    return m;
  }

  std::vector<bool> free_set(const Point& p) const {
    std::vector<bool> free(n_, true);
    for (std::size_t i = 0; i < n_; ++i) {
      if (p.z[i] <= box_.lower[i] && p.grad[i] > 0.0) free[i] = false;
      if (p.z[i] >= box_.upper[i] && p.grad[i] < 0.0) free[i] = false;
      if (box_.lower[i] == box_.upper[i]) free[i] = false;
    }
    return free;
  }

  // Two-loop recursion on the free coordinates. Returns an empty vector when
  // there is no usable curvature pair.
  std::vector<double> quasi_newton_direction(const Point& p, const std::vector<bool>& free) const {
    auto fdot = [&](const std::vector<double>& a, const std::vector<double>& b) {
      double s = 0.0;
      for (std::size_t i = 0; i < n_; ++i)
        if (free[i]) s += a[i] * b[i];
      return s;
    };
    std::vector<std::size_t> usable;
    std::vector<double> rho(s_.size(), 0.0);
    for (std::size_t k = 0; k < s_.size(); ++k) {
      const double sy = fdot(s_[k], y_[k]);
      const double yy = fdot(y_[k], y_[k]);
      if (sy > std::numeric_limits<double>::epsilon() * yy && sy > 0.0) {
        rho[k] = 1.0 / sy;
        usable.push_back(k);
      }
    }
    if (usable.empty()) return {};

    std::vector<double> q(n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i)
      if (free[i]) q[i] = p.grad[i];
    std::vector<double> alpha(s_.size(), 0.0);
    for (auto it = usable.rbegin(); it != usable.rend(); ++it) {
      const std::size_t k = *it;
      alpha[k] = rho[k] * fdot(s_[k], q);
      for (std::size_t i = 0; i < n_; ++i)
        if (free[i]) q[i] -= alpha[k] * y_[k][i];
    }
    const std::size_t last = usable.back();
    const double gamma = fdot(s_[last], y_[last]) / fdot(y_[last], y_[last]);
    for (double& v : q) v *= gamma;
    for (std::size_t k : usable) {
      const double beta = rho[k] * fdot(y_[k], q);
      for (std::size_t i = 0; i < n_; ++i)
        if (free[i]) q[i] += s_[k][i] * (alpha[k] - beta);
    }
    for (double& v : q) v = -v;
    return q;
  }

  // Largest step along d at which some free coordinate still moves inside the box.
  double last_breakpoint(const Point& p, const std::vector<double>& d) const {
    double t = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      if (d[i] > 0.0) t = std::max(t, (box_.upper[i] - p.z[i]) / d[i]);
      else if (d[i] < 0.0) t = std::max(t, (box_.lower[i] - p.z[i]) / d[i]);
    }
    return t;
  }

  std::vector<double> moved(const Point& p, const std::vector<double>& d, double step) const {
    std::vector<double> z(n_);
    for (std::size_t i = 0; i < n_; ++i) z[i] = p.z[i] + step * d[i];
    return project(z, box_);
  }

  bool armijo_ok(const Point& from, const Point& to) const {
    double decrease = 0.0;
    for (std::size_t i = 0; i < n_; ++i) decrease += from.grad[i] * (to.z[i] - from.z[i]);
    return to.h <= from.h + opt_.armijo * decrease;
  }

  void remember(const Point& from, const Point& to) {
    std::vector<double> s(n_), y(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      s[i] = to.z[i] - from.z[i];
      y[i] = to.grad[i] - from.grad[i];
    }
    double sy = 0.0, yy = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      sy += s[i] * y[i];
      yy += y[i] * y[i];
    }
    last_s_norm2_ = 0.0;
    for (double v : s) last_s_norm2_ += v * v;
    last_y_norm2_ = yy;
    if (opt_.memory == 0 || !(sy > std::numeric_limits<double>::epsilon() * yy)) return;
    s_.push_back(std::move(s));
    y_.push_back(std::move(y));
    if (s_.size() > opt_.memory) {
      s_.pop_front();
      y_.pop_front();
    }
  }

  // Secant Lipschitz estimate from the most recent move, or from a failed trial.
  double lipschitz_estimate(const Point& from, const Point& trial) const {
    if (last_s_norm2_ > 0.0 && last_y_norm2_ > 0.0) return std::sqrt(last_y_norm2_ / last_s_norm2_);
    double lin = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      const double s = trial.z[i] - from.z[i];
      lin += from.grad[i] * s;
      ss += s * s;
    }
    if (ss == 0.0) return 0.0;
    return 2.0 * std::fabs(trial.h - from.h - lin) / ss;
  }

  MaxResult run(std::span<const double> z0) {
    MaxResult result;
    Diagnostics& diag = result.diagnostics;
    Point cur = eval({z0.begin(), z0.end()});
    Point best = cur;
    bool probed = false;
    bool first_move = true;

    while (diag.iterations < opt_.max_outer) {
      const double pg = projected_grad_norm(cur);
      diag.projected_grad_norm = pg;
      if (pg < opt_.pg_tolerance) {
        if (!probed && first_move && opt_.stationary_probe > 0.0) {
          // A stationary start may be a minimum of f; nudge off it along a
          // fixed random sign pattern so first-order information appears.
          probed = true;
          diag.stationary_start_probed = true;
          Rng rng(opt_.probe_seed);
          std::vector<double> z(n_);
          for (std::size_t i = 0; i < n_; ++i) {
            const double half = 0.5 * (box_.upper[i] - box_.lower[i]);
            z[i] = cur.z[i] + (rng.coin() ? 1.0 : -1.0) * opt_.stationary_probe * half;
          }
          Point probe = eval(project(z, box_));
          if (probe.h < cur.h) {
            cur = std::move(probe);
            if (cur.h < best.h) best = cur;
            continue;
          }
        }
        diag.converged = true;
        break;
      }
      ++diag.iterations;

      const auto free = free_set(cur);
      std::vector<double> d = quasi_newton_direction(cur, free);
      bool have_curvature = !d.empty();
      double gd = 0.0;
      if (have_curvature)
        for (std::size_t i = 0; i < n_; ++i) gd += cur.grad[i] * d[i];
      if (!have_curvature || !(gd < 0.0)) {
        have_curvature = false;
        d.assign(n_, 0.0);
        for (std::size_t i = 0; i < n_; ++i)
          if (free[i]) d[i] = -cur.grad[i];
      }

      // Without curvature the direction has no natural length: start from the
      // step that sweeps the projected path across the whole box.
      double step = have_curvature ? 1.0 : last_breakpoint(cur, d);
      if (!(step > 0.0) || !std::isfinite(step)) step = 1.0;

      std::optional<Point> accepted;
      Point trial;
      for (std::size_t h = 0; h <= opt_.max_halvings; ++h, step *= 0.5) {
        auto z = moved(cur, d, step);
        if (z == cur.z) break;
        trial = eval(std::move(z));
        if (armijo_ok(cur, trial)) {
          accepted = std::move(trial);
          break;
        }
      }

      if (!accepted) {
        ++diag.line_search_failures;
        const double L = trial.z.empty() ? 0.0 : lipschitz_estimate(cur, trial);
        if (L > 0.0 && std::isfinite(L)) {
          std::vector<double> pg_dir(n_);
          for (std::size_t i = 0; i < n_; ++i) pg_dir[i] = -cur.grad[i];
          auto z = moved(cur, pg_dir, 1.0 / L);
          if (z != cur.z) {
            Point fallback = eval(std::move(z));
            if (armijo_ok(cur, fallback)) {
              ++diag.fallback_steps;
              accepted = std::move(fallback);
            }
          }
        }
        if (!accepted) break;
      }

      remember(cur, *accepted);
      cur = std::move(*accepted);
      first_move = false;
      if (cur.h < best.h) best = cur;
    }

    if (diag.iterations >= opt_.max_outer) diag.projected_grad_norm = projected_grad_norm(cur);
    result.z = std::move(best.z);
    result.value = -best.h;
    diag.oracle_calls = oracle_.calls();
    return result;
  }

 private:
  ObjectiveOracle& oracle_;
  const Box& box_;
  const SolverOptions& opt_;
  std::size_t n_;
  std::deque<std::vector<double>> s_, y_;
  double last_s_norm2_ = 0.0;
  double last_y_norm2_ = 0.0;
};

}  // namespace

MaxResult maximize(ObjectiveOracle& oracle, const Box& box, std::span<const double> z0,
                   const SolverOptions& options) {
  box.validate();
  if (z0.size() != box.size() || oracle.dim() != box.size()) throw ShapeError("maximize: dimension mismatch");
  if (!box.contains(z0)) throw DomainError("maximize: starting point lies outside the box");
  const std::size_t calls_before = oracle.calls();
  Solver solver(oracle, box, options);
  MaxResult r = solver.run(z0);
  r.diagnostics.oracle_calls = oracle.calls() - calls_before;
  return r;
}

MaxResult vertex_bruteforce_max(const QuadraticObjective& q, const Box& box) {
  q.validate();
  box.validate();
  const std::size_t p = q.dim;
  if (box.size() != p) throw ShapeError("vertex oracle: box and objective dimensions differ");
  if (p > 20) throw SizeError("vertex enumeration is limited to p <= 20 (got " + std::to_string(p) + ")");

  // Gray-code walk keeps H z up to date with one column update per vertex.
  std::vector<double> z = box.lower;
  std::vector<double> hz(p, 0.0);
  for (std::size_t i = 0; i < p; ++i) hz[i] = kernels::dot({q.hessian.data() + i * p, p}, z);
  double value = q.value(z);
  std::vector<double> best_z = z;
  double best = value;
  const std::uint64_t count = std::uint64_t{1} << p;
  for (std::uint64_t k = 1; k < count; ++k) {
    const std::size_t j = static_cast<std::size_t>(std::countr_zero(k));
    const double to = z[j] == box.lower[j] ? box.upper[j] : box.lower[j];
    const double delta = to - z[j];
    value += delta * (hz[j] + 0.5 * q.hessian[j * p + j] * delta + q.linear[j]);
    for (std::size_t i = 0; i < p; ++i) hz[i] += delta * q.hessian[i * p + j];
    z[j] = to;
    if (value > best) {
      best = value;
      best_z = z;
    }
  }
  MaxResult r;
  r.value = q.value(best_z);
  r.z = std::move(best_z);
  return r;
}

}  // namespace minima::boxmax
