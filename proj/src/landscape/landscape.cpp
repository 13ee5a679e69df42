#include "minima/landscape.hpp"

#include <cmath>
#include <numbers>

#include "minima/errors.hpp"
#include "minima/kernels.hpp"
#include "minima/parallel.hpp"

namespace minima::landscape {

std::vector<double> alpha_grid(std::size_t count, double lo, double hi) {
  if (count == 0) throw ConfigError("slice grid needs at least one point");
  if (count == 1) return {lo};
  std::vector<double> a(count);
  const double span = hi - lo;
  for (std::size_t i = 0; i < count; ++i)
    a[i] = lo + span * static_cast<double>(i) / static_cast<double>(count - 1);
  a.back() = hi;
  return a;
}

namespace {

// sin and cos of alpha * pi / 2.
std::pair<double, double> quarter_turn_sincos(double alpha) {
  const double k = std::nearbyint(alpha);
  const double r = alpha - k;
  const double t = r * std::numbers::pi / 2.0;
  const double s = std::sin(t), c = std::cos(t);
  long q = static_cast<long>(k) % 4;
  if (q < 0) q += 4;
  switch (q) {
    case 0: return {s, c};
    case 1: return {c, -s};
    case 2: return {-s, -c};
    default: return {-c, s};
  }
}

}  // namespace

std::vector<double> slice_weights(SliceKind kind, std::span<const double> x_s, std::span<const double> x_l,
                                  double alpha) {
  if (x_s.size() != x_l.size()) throw ShapeError("slice endpoints have different lengths");
  if (!std::isfinite(alpha)) throw DomainError("slice alpha must be finite");
  double w_s, w_l;
  if (kind == SliceKind::Linear) {
    w_s = 1.0 - alpha;
    w_l = 1.0 - w_s;
  } else {
    const auto [s, c] = quarter_turn_sincos(alpha);
    w_l = s;
    w_s = c;
  }
  std::vector<double> out(x_s.size());
  kernels::active().axpby(w_s, x_s.data(), w_l, x_l.data(), out.data(), out.size());
  return out;
}

SlicePoint evaluate_point(const net::Network& network, const net::ParamVector& params,
                          const data::Dataset& train_set, const data::Dataset& test_set) {
  const net::RunningStats stats = network.spec().batchnorm_count() > 0
                                      ? network.population_stats(params, train_set.features)
                                      : net::RunningStats{};
  SlicePoint pt;
  auto on = [&](const data::Dataset& ds, double& loss, double& acc) {
    auto ev = network.evaluate(params, stats, ds.features, ds.labels, net::EvalMode::Eval, {.probabilities = true});
    loss = ev.loss;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < ds.size(); ++r)
      if (net::argmax(ev.probabilities.row(r)) == static_cast<std::size_t>(ds.labels[r])) ++hits;
    acc = static_cast<double>(hits) / static_cast<double>(ds.size());
  };
  on(train_set, pt.train_loss, pt.train_acc);
  on(test_set, pt.test_loss, pt.test_acc);
  return pt;
}

std::vector<SlicePoint> slice(const net::Network& network, SliceKind kind, const net::ParamVector& x_s,
                              const net::ParamVector& x_l, const data::Dataset& train_set,
                              const data::Dataset& test_set, std::span<const double> alphas) {
  if (x_s.size() != network.num_params() || x_l.size() != network.num_params())
    throw ShapeError("slice endpoints do not match the network");
  if (alphas.empty()) throw ConfigError("slice grid is empty");
  std::vector<SlicePoint> out(alphas.size());
  parallel::for_each(alphas.size(), [&](std::size_t i) {
    const net::ParamVector x = network.wrap(slice_weights(kind, x_s.values, x_l.values, alphas[i]));
    out[i] = evaluate_point(network, x, train_set, test_set);
    out[i].alpha = alphas[i];
  });
  return out;
}

DistanceRatio distance_ratio(std::span<const double> x0, std::span<const double> x_s,
                             std::span<const double> x_l) {
  if (x0.size() != x_s.size() || x0.size() != x_l.size()) throw ShapeError("distance_ratio: length mismatch");
  double ss = 0.0, ll = 0.0;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const double a = x_s[i] - x0[i], b = x_l[i] - x0[i];
    ss += a * a;
    ll += b * b;
  }
  DistanceRatio r{std::sqrt(ss), std::sqrt(ll), 0.0};
  if (r.d_l == 0.0) throw DegenerateError("large-batch solution coincides with the starting point");
  r.ratio = r.d_s / r.d_l;
  return r;
}

}  // namespace minima::landscape
