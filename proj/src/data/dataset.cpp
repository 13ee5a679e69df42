#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "minima/data.hpp"
#include "minima/parallel.hpp"
#include "minima/rng.hpp"

namespace minima::data {

void Dataset::validate() const {
  if (features.rows() != labels.size()) throw ShapeError("feature rows do not match label count");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
      throw ShapeError("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
  if (image && image->height * image->width != features.cols())
    throw ShapeError("image shape does not match feature width");
  if (!features.all_finite()) throw NumericError("dataset contains non-finite features");
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.features = gather_rows(features, rows);
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) out.labels.push_back(labels.at(r));
  out.num_classes = num_classes;
  out.image = image;
  out.range = range;
  return out;
}

Dataset Dataset::head(std::size_t count) const {
  std::vector<std::size_t> rows(std::min(count, size()));
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return subset(rows);
}

namespace {

Dataset draw_clusters(const Matrix& means, std::size_t count, std::uint64_t seed, const SyntheticSpec& spec) {
  Dataset ds;
  ds.num_classes = spec.classes;
  ds.image = spec.image;
  ds.features = Matrix(count, spec.dim);
  ds.labels.resize(count);
  // Component c belongs to class c % classes, so every class gets the same
  // share of rows and of components.
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i % means.rows();
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng.engine());
  for (std::size_t i = 0; i < count; ++i) {
    ds.labels[i] = static_cast<int>(order[i] % spec.classes);
    auto mu = means.row(order[i]);
    auto x = ds.features.row(i);
    for (std::size_t c = 0; c < spec.dim; ++c) x[c] = mu[c] + rng.normal();
  }
  return ds;
}

}  // namespace

std::pair<Dataset, Dataset> synth_gaussian(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw ConfigError("synthetic data needs at least two classes");
  if (!(spec.separation >= 0.0)) throw ConfigError("separation must be non-negative");
  if (spec.dim == 0 || spec.train_size == 0 || spec.test_size == 0)
    throw ConfigError("synthetic sizes must be positive");
  if (spec.image && spec.image->height * spec.image->width != spec.dim)
    throw ConfigError("synthetic image shape does not match dim");

  if (spec.modes_per_class == 0) throw ConfigError("modes_per_class must be at least 1");

  Matrix means(spec.classes * spec.modes_per_class, spec.dim);
  Rng rng(derive_seed(spec.seed, {0}));
  for (std::size_t k = 0; k < means.rows(); ++k) {
    auto mu = means.row(k);
    double norm2 = 0.0;
    for (double& v : mu) {
      v = rng.normal();
      norm2 += v * v;
    }
    const double s = spec.separation / std::sqrt(norm2);
    for (double& v : mu) v *= s;
  }
  return {draw_clusters(means, spec.train_size, derive_seed(spec.seed, {1}), spec),
          draw_clusters(means, spec.test_size, derive_seed(spec.seed, {2}), spec)};
}

std::vector<double> transform_image(std::span<const double> pixels, ImageShape shape, const ImageTransform& t) {
  const std::size_t h = shape.height, w = shape.width;
  if (pixels.size() != h * w) throw ShapeError("pixel count does not match image shape");

  double lo = 0.0, hi = 0.0;
  for (double p : pixels) {
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  auto at = [&](long y, long x) -> double {
    if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) return 0.0;
    const std::size_t sx = t.flip ? w - 1 - static_cast<std::size_t>(x) : static_cast<std::size_t>(x);
    return pixels[static_cast<std::size_t>(y) * w + sx];
  };

  const double theta = t.rotation_degrees * std::numbers::pi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;

  std::vector<double> out(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      // Inverse map: undo the shift, then the rotation about the centre.
      const double dy = static_cast<double>(y) - t.shift_y - cy;
      const double dx = static_cast<double>(x) - t.shift_x - cx;
      const double sy = c * dy - s * dx + cy;
      const double sx = s * dy + c * dx + cx;
      const double fy0 = std::floor(sy), fx0 = std::floor(sx);
      const double fy = sy - fy0, fx = sx - fx0;
      const long y0 = static_cast<long>(fy0), x0 = static_cast<long>(fx0);
      double v = (1.0 - fy) * (1.0 - fx) * at(y0, x0);
      if (fx != 0.0) v += (1.0 - fy) * fx * at(y0, x0 + 1);
      if (fy != 0.0) v += fy * (1.0 - fx) * at(y0 + 1, x0);
      if (fx != 0.0 && fy != 0.0) v += fy * fx * at(y0 + 1, x0 + 1);
      out[y * w + x] = std::clamp(v, lo, hi);
    }
  }
  return out;
}

Dataset augment(const Dataset& ds, const AugmentPolicy& policy) {
  if (!ds.image) throw ShapeError("augmentation needs a dataset with an image shape");
  if (policy.max_rotation_degrees < 0.0 || policy.max_translation_fraction < 0.0)
    throw ConfigError("augmentation limits must be non-negative");
  const ImageShape shape = *ds.image;
  Dataset out = ds;
  parallel::for_each(ds.size(), [&](std::size_t i) {
    Rng rng(derive_seed(policy.seed, {i}));
    ImageTransform t;
    const bool coin = rng.coin();
    const double u_rot = rng.uniform(-1.0, 1.0);
    const double u_y = rng.uniform(-1.0, 1.0);
    const double u_x = rng.uniform(-1.0, 1.0);
    t.flip = policy.horizontal_flip && coin;
    t.rotation_degrees = policy.max_rotation_degrees * u_rot;
    t.shift_y = policy.max_translation_fraction * static_cast<double>(shape.height) * u_y;
    t.shift_x = policy.max_translation_fraction * static_cast<double>(shape.width) * u_x;
    auto img = transform_image(ds.features.row(i), shape, t);
    std::copy(img.begin(), img.end(), out.features.row(i).begin());
  });
  return out;
}

Dataset adversarial_examples(const net::Network& network, const net::ParamVector& params,
                             const net::RunningStats& stats, const Dataset& ds, double eta) {
  if (!(eta >= 0.0)) throw ConfigError("adversarial step eta must be non-negative");
  Matrix g = network.input_gradient(params, stats, ds.features, ds.labels);
  Dataset out = ds;
  auto x = out.features.values();
  auto gv = g.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double sign = gv[i] > 0.0 ? 1.0 : (gv[i] < 0.0 ? -1.0 : 0.0);
    double v = x[i] + eta * sign;
    if (ds.range) v = std::clamp(v, ds.range->lo, ds.range->hi);
    x[i] = v;
  }
  return out;
}

}  // namespace minima::data
