#include "minima/sharpness.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "minima/errors.hpp"
#include "minima/kernels.hpp"
#include "minima/rng.hpp"

namespace minima::sharpness {
namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> view(const Matrix& m) {
  return {m.values().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

bool full_column_rank(const Matrix& a) {
  if (a.cols() > a.rows() || a.cols() == 0) return false;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(view(a));
  return static_cast<std::size_t>(qr.rank()) == a.cols();
}

}  // namespace

SubspaceSpec SubspaceSpec::full_space() { return {}; }

SubspaceSpec SubspaceSpec::random(std::size_t n, std::size_t p, std::uint64_t seed) {
  if (p == 0 || p > n)
    throw RankError("random subspace needs 1 <= p <= n (p=" + std::to_string(p) + ", n=" + std::to_string(n) + ")");
  SubspaceSpec s;
  s.kind = SubspaceKind::Random;
  s.p = p;
  s.seed = seed;
  for (std::uint64_t attempt = 0; attempt < 16; ++attempt) {
    s.used_seed = seed + attempt;
    Rng rng(derive_seed(s.used_seed, {0xa5}));
    s.basis = Matrix(n, p);
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t i = 0; i < n; ++i) s.basis(i, j) = rng.normal();
    if (full_column_rank(s.basis)) return s;
  }
  throw RankError("could not draw a full-rank random subspace");
}

SubspaceSpec SubspaceSpec::explicit_basis(Matrix basis) {
  SubspaceSpec s;
  s.kind = SubspaceKind::Explicit;
  s.p = basis.cols();
  s.basis = std::move(basis);
  return s;
}

std::size_t SubspaceSpec::dim(std::size_t n) const {
  if (kind == SubspaceKind::FullSpace) return n;
  if (basis.rows() != n) throw ShapeError("subspace basis has " + std::to_string(basis.rows()) + " rows, expected " + std::to_string(n));
  return p;
}

std::string SubspaceSpec::name() const {
  switch (kind) {
    case SubspaceKind::FullSpace: return "full";
    case SubspaceKind::Random: return "random";
    case SubspaceKind::Explicit: return "explicit";
  }
  return "?";
}

void SubspaceSpec::lift(std::span<const double> x, std::span<const double> y, std::span<double> out) const {
  if (kind == SubspaceKind::FullSpace) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
    return;
  }
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + kernels::dot(basis.row(i), y);
}

void SubspaceSpec::pull_back(std::span<const double> g, std::span<double> out) const {
  if (kind == SubspaceKind::FullSpace) {
    std::copy(g.begin(), g.end(), out.begin());
    return;
  }
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g[i] != 0.0) kernels::axpy(g[i], basis.row(i), out);
}

std::vector<double> pseudo_inverse_apply(const Matrix& a, std::span<const double> x) {
  if (x.size() != a.rows()) throw ShapeError("pseudo_inverse_apply: x length does not match A rows");
  const std::size_t p = a.cols();
  if (p == 0 || p > a.rows()) throw RankError("pseudo-inverse needs a full column rank matrix");
  const auto A = view(a);
  const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  const Eigen::MatrixXd gram = A.transpose() * A;
  const Eigen::VectorXd rhs = A.transpose() * xv;

  Eigen::VectorXd w;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  const Eigen::VectorXd d = ldlt.vectorD();
  const double dmax = d.cwiseAbs().maxCoeff();
  const bool ldlt_ok = ldlt.info() == Eigen::Success && dmax > 0.0 &&
                       d.minCoeff() > static_cast<double>(p) * 1e-12 * dmax;
  if (ldlt_ok) {
    w = ldlt.solve(rhs);
  } else {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    if (static_cast<std::size_t>(qr.rank()) < p)
      throw RankError("A'A is rank deficient (rank " + std::to_string(qr.rank()) + " < " + std::to_string(p) + ")");
    w = qr.solve(xv);
  }
  return {w.data(), w.data() + w.size()};
}

boxmax::Box build_box(const SubspaceSpec& subspace, std::span<const double> x, double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw DomainError("sharpness epsilon must be positive");
  std::vector<double> center;
  if (subspace.kind == SubspaceKind::FullSpace)
    center.assign(x.begin(), x.end());
  else
    center = pseudo_inverse_apply(subspace.basis, x);
  boxmax::Box box;
  box.lower.resize(center.size());
  box.upper.resize(center.size());
  for (std::size_t i = 0; i < center.size(); ++i) {
    const double half = eps * (std::fabs(center[i]) + 1.0);
    box.lower[i] = -half;
    box.upper[i] = half;
  }
  return box;
}

double phi_from(double max_value, double f_at_x) { return (max_value - f_at_x) / (1.0 + f_at_x) * 100.0; }

Report sharpness(const Objective& f, std::span<const double> x, double eps, const SubspaceSpec& subspace,
                 const Options& options) {
  const std::size_t n = x.size();
  const std::size_t p = subspace.dim(n);
  const boxmax::Box box = build_box(subspace, x, eps);

  std::vector<double> w(n), gw(n);
  boxmax::ObjectiveOracle oracle(p, [&](std::span<const double> y, std::span<double> gy) {
    subspace.lift(x, y, w);
    const double v = f(w, gw);
    subspace.pull_back(gw, gy);
    return v;
  });

  Report report;
  report.epsilon = eps;
  report.kind = subspace.kind;
  report.p = p;
  report.subspace_seed = subspace.used_seed;
  report.f_at_x = f(x, gw);
  if (!std::isfinite(report.f_at_x)) throw NumericError("objective is not finite at x", {}, {x.begin(), x.end()});

  boxmax::SolverOptions solver;
  solver.max_outer = options.max_outer;
  solver.memory = options.memory;

  const std::vector<double> origin(p, 0.0);
  boxmax::MaxResult best = boxmax::maximize(oracle, box, origin, solver);
  for (std::size_t r = 0; r < options.restarts; ++r) {
    Rng rng(derive_seed(options.restart_seed, {r}));
    std::vector<double> z0(p);
    for (std::size_t i = 0; i < p; ++i) z0[i] = rng.uniform(box.lower[i], box.upper[i]);
    boxmax::MaxResult res = boxmax::maximize(oracle, box, z0, solver);
    if (res.value > best.value) best = std::move(res);
  }
  report.max_value_found = std::max(best.value, report.f_at_x);
  report.diagnostics = best.diagnostics;
  report.diagnostics.oracle_calls = oracle.calls();
  report.phi = phi_from(report.max_value_found, report.f_at_x);
  return report;
}

Report sharpness_exact_quadratic(const boxmax::QuadraticObjective& q, std::span<const double> x, double eps,
                                 const SubspaceSpec& subspace) {
  q.validate();
  const std::size_t n = q.dim;
  if (x.size() != n) throw ShapeError("quadratic and point dimensions differ");
  const std::size_t p = subspace.dim(n);
  const boxmax::Box box = build_box(subspace, x, eps);

  // f(x + A y) = 1/2 y'(A'HA)y + (A'(Hx + g))'y + f(x)
  std::vector<double> gx(n);
  q.gradient(x, gx);
  boxmax::QuadraticObjective r;
  r.dim = p;
  r.constant = q.value(x);
  r.linear.resize(p);
  subspace.pull_back(gx, r.linear);
  r.hessian.assign(p * p, 0.0);
  std::vector<double> col(n), hcol(n), acol(p);
  for (std::size_t j = 0; j < p; ++j) {
    std::fill(col.begin(), col.end(), 0.0);
    std::vector<double> ej(p, 0.0);
    ej[j] = 1.0;
    const std::vector<double> zero(n, 0.0);
    subspace.lift(zero, ej, col);
    for (std::size_t i = 0; i < n; ++i) hcol[i] = kernels::dot({q.hessian.data() + i * n, n}, col);
    subspace.pull_back(hcol, acol);
    for (std::size_t i = 0; i < p; ++i) r.hessian[i * p + j] = acol[i];
  }
  // Symmetrize away rounding so validate() accepts the reduced matrix.
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i + 1; j < p; ++j) {
      const double m = 0.5 * (r.hessian[i * p + j] + r.hessian[j * p + i]);
      r.hessian[i * p + j] = m;
      r.hessian[j * p + i] = m;
    }

  const boxmax::MaxResult best = boxmax::vertex_bruteforce_max(r, box);
  Report report;
  report.epsilon = eps;
  report.kind = subspace.kind;
  report.p = p;
  report.subspace_seed = subspace.used_seed;
  report.f_at_x = r.constant;
  report.max_value_found = std::max(best.value, r.constant);
  report.phi = phi_from(report.max_value_found, report.f_at_x);
  return report;
}

Objective network_objective(const net::Network& network, const net::RunningStats& stats,
                            const data::Dataset& train_set) {
  return [&network, &stats, &train_set](std::span<const double> w, std::span<double> grad) {
    const net::ParamVector params = network.wrap({w.begin(), w.end()});
    auto ev = network.evaluate(params, stats, train_set.features, train_set.labels, net::EvalMode::Eval,
                               {.param_grad = true});
    std::copy(ev.grad.begin(), ev.grad.end(), grad.begin());
    return ev.loss;
  };
}

}  // namespace minima::sharpness
