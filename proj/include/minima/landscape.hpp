#pragma once
// One-dimensional slices of the loss between two solutions, and the distance
// of each solution from the shared starting point.

#include <cstddef>
#include <span>
#include <vector>

#include "minima/data.hpp"
#include "minima/net.hpp"

namespace minima::landscape {

struct SlicePoint {
  double alpha = 0.0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
};

enum class SliceKind { Linear, Curvilinear };

/// `count` evenly spaced points on [lo, hi]; defaults give 61 points on [-1, 2].
std::vector<double> alpha_grid(std::size_t count = 61, double lo = -1.0, double hi = 2.0);

/// Linear: (1 - a) x_s + a x_l. The coefficient pair is formed as
/// w_s = 1 - a, w_l = 1 - w_s, which makes the swapped slice at 1 - a
/// produce the same vector bit for bit.
/// Curvilinear: sin(a pi/2) x_l + cos(a pi/2) x_s, with the angle reduced by
/// whole quarter turns first so integer a hits the endpoints exactly.
std::vector<double> slice_weights(SliceKind kind, std::span<const double> x_s, std::span<const double> x_l,
                                  double alpha);

/// Loss and accuracy of `params` on both sets. BatchNorm statistics are
/// recomputed over the training set at `params` and then frozen (Eval mode).
SlicePoint evaluate_point(const net::Network& network, const net::ParamVector& params,
                          const data::Dataset& train_set, const data::Dataset& test_set);

std::vector<SlicePoint> slice(const net::Network& network, SliceKind kind, const net::ParamVector& x_s,
                              const net::ParamVector& x_l, const data::Dataset& train_set,
                              const data::Dataset& test_set, std::span<const double> alphas);

inline std::vector<SlicePoint> linear_slice(const net::Network& network, const net::ParamVector& x_s,
                                            const net::ParamVector& x_l, const data::Dataset& train_set,
                                            const data::Dataset& test_set, std::span<const double> alphas) {
  return slice(network, SliceKind::Linear, x_s, x_l, train_set, test_set, alphas);
}

inline std::vector<SlicePoint> curvilinear_slice(const net::Network& network, const net::ParamVector& x_s,
                                                 const net::ParamVector& x_l, const data::Dataset& train_set,
                                                 const data::Dataset& test_set, std::span<const double> alphas) {
  return slice(network, SliceKind::Curvilinear, x_s, x_l, train_set, test_set, alphas);
}

struct DistanceRatio {
  double d_s = 0.0;
  double d_l = 0.0;
  double ratio = 0.0;
};

/// |x_s - x0| / |x_l - x0|. DegenerateError when x_l == x0.
DistanceRatio distance_ratio(std::span<const double> x0, std::span<const double> x_s,
                             std::span<const double> x_l);

}  // namespace minima::landscape
