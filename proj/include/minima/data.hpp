#pragma once
// Classification datasets: IDX (MNIST) ingestion, Gaussian-cluster synthetic
// data, image augmentation and fast-gradient-sign adversarial copies.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "minima/matrix.hpp"
#include "minima/net.hpp"

namespace minima::data {

struct ImageShape {
  std::size_t height = 0;
  std::size_t width = 0;
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

struct ValueRange {
  double lo = 0.0;
  double hi = 1.0;
  friend bool operator==(const ValueRange&, const ValueRange&) = default;
};

struct Dataset {
  Matrix features;          // M x d
  std::vector<int> labels;  // M entries in [0, num_classes)
  std::size_t num_classes = 0;
  std::optional<ImageShape> image;
  /// Set when features are known to live in a fixed interval (IDX data: [0,1]).
  std::optional<ValueRange> range;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }
  /// Throws ShapeError if labels, features or image shape disagree.
  void validate() const;
  Dataset subset(std::span<const std::size_t> rows) const;
  Dataset head(std::size_t count) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// --- IDX ---------------------------------------------------------------------

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Parses in-memory IDX images + labels. Pixel bytes are divided by 255.
Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels,
                  std::size_t num_classes = 10);

/// Reads IDX files, raw or gzip-compressed (detected from the gzip magic).
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::size_t num_classes = 10);

/// Inverse of parse_idx. Every feature must be exactly k/255 for some byte k
/// (see quantize_unit_bytes); anything else is a FormatError.
std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> encode_idx(const Dataset& ds);
void write_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path);

/// Affinely maps features into [0,1] using the dataset's min/max and rounds
/// to multiples of 1/255, so the result survives an IDX round trip exactly.
Dataset quantize_unit_bytes(const Dataset& ds);

// --- synthetic -----------------------------------------------------------------

struct SyntheticSpec {
  std::size_t train_size = 2000;
  std::size_t test_size = 2000;
  std::size_t dim = 60;
  std::size_t classes = 10;
  double separation = 3.0;
  /// Each class is an equal mixture of this many clusters.
  std::size_t modes_per_class = 1;
  std::uint64_t seed = 0;
  std::optional<ImageShape> image;
};

/// Cluster means drawn on the sphere of radius `separation`, unit-variance
/// isotropic clusters, balanced labels. Train and test come from independent
/// streams.
std::pair<Dataset, Dataset> synth_gaussian(const SyntheticSpec& spec);

// --- augmentation --------------------------------------------------------------

struct AugmentPolicy {
  bool horizontal_flip = true;
  double max_rotation_degrees = 10.0;
  double max_translation_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct ImageTransform {
  bool flip = false;
  double rotation_degrees = 0.0;
  double shift_y = 0.0;  // pixels, positive moves content down
  double shift_x = 0.0;  // pixels, positive moves content right
};

/// Flip, then rotate about the centre, then translate; bilinear sampling with
/// zero fill outside the source image.
std::vector<double> transform_image(std::span<const double> pixels, ImageShape shape, const ImageTransform& t);

/// Draws one transform per image from a per-image stream of `policy.seed`.
Dataset augment(const Dataset& ds, const AugmentPolicy& policy);

// --- adversarial ---------------------------------------------------------------

/// features + eta * sign(d loss / d features), clipped to ds.range when set.
Dataset adversarial_examples(const net::Network& network, const net::ParamVector& params,
                             const net::RunningStats& stats, const Dataset& ds, double eta);

}  // namespace minima::data
