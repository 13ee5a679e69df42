#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "minima/kernels.hpp"
#include "minima/optim.hpp"
#include "minima/rng.hpp"

namespace minima::optim {

BatchSampler::BatchSampler(std::size_t dataset_size, std::size_t batch_size, SamplingStrategy strategy,
                           std::uint64_t seed)
    : size_(dataset_size), batch_size_(batch_size), strategy_(strategy), seed_(seed) {
  if (batch_size_ == 0 || batch_size_ > size_)
    throw ConfigError("batch size " + std::to_string(batch_size_) + " must lie in [1, " + std::to_string(size_) + "]");
}

std::size_t BatchSampler::batches_per_epoch() const {
  if (strategy_ == SamplingStrategy::EpochShuffle) return size_ / batch_size_;
  return (size_ + batch_size_ - 1) / batch_size_;
}

std::vector<std::size_t> BatchSampler::next() {
  std::vector<std::size_t> batch;
  if (strategy_ == SamplingStrategy::EpochShuffle) {
    if (permutation_.empty() || cursor_ + batch_size_ > size_) {
      permutation_.resize(size_);
      std::iota(permutation_.begin(), permutation_.end(), std::size_t{0});
      Rng rng(derive_seed(seed_, {epoch_++}));
      std::shuffle(permutation_.begin(), permutation_.end(), rng.engine());
      cursor_ = 0;
    }
    batch.assign(permutation_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                 permutation_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_size_));
    cursor_ += batch_size_;
    std::sort(batch.begin(), batch.end());
  } else {
    std::vector<std::size_t> all(size_);
    std::iota(all.begin(), all.end(), std::size_t{0});
    Rng rng(derive_seed(seed_, {draws_++}));
    batch.reserve(batch_size_);
    std::sample(all.begin(), all.end(), std::back_inserter(batch), batch_size_, rng.engine());
  }
  return batch;
}

namespace {

void require_finite(std::span<const double> g) {
  for (double v : g)
    if (!std::isfinite(v)) throw NumericError("non-finite gradient passed to optimizer step");
}

}  // namespace

void sgd_step(std::span<double> x, std::span<const double> grad, double learning_rate) {
  if (x.size() != grad.size()) throw ShapeError("sgd_step: gradient length does not match parameters");
  if (!(learning_rate > 0.0)) throw ConfigError("sgd_step: learning rate must be positive");
  require_finite(grad);
  kernels::axpy(-learning_rate, grad, x);
}

void adam_step(AdamState& state, std::span<double> x, std::span<const double> grad) {
  if (x.size() != grad.size() || state.m.size() != x.size() || state.v.size() != x.size())
    throw ShapeError("adam_step: state, parameter and gradient lengths differ");
  require_finite(grad);
  const AdamConfig& c = state.config;
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  // Folded bias correction: lr * m_hat / (sqrt(v_hat) + eps)
  //   == (lr * sqrt(bc2) / bc1) * m / (sqrt(v) + eps * sqrt(bc2)).
  const double step = c.learning_rate * std::sqrt(bc2) / bc1;
  const double eps = c.epsilon * std::sqrt(bc2);
  kernels::active().adam_update(c.beta1, c.beta2, step, eps, grad.data(), state.m.data(), state.v.data(),
                                x.data(), x.size());
}

// --- snapshot files ------------------------------------------------------------

std::vector<std::uint8_t> encode_vector(std::span<const double> values) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + 8 * values.size());
  for (char c : {'M', 'S', 'P', 'V'}) out.push_back(static_cast<std::uint8_t>(c));
  auto put = [&](std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  put(kSnapshotVersion, 4);
  put(values.size(), 8);
  for (double v : values) put(std::bit_cast<std::uint64_t>(v), 8);
  return out;
}

std::vector<double> decode_vector(std::span<const std::uint8_t> bytes) {
  auto get = [&](std::size_t offset, int count) {
    if (offset + static_cast<std::size_t>(count) > bytes.size()) throw FormatError("truncated snapshot", bytes.size());
    std::uint64_t v = 0;
    for (int i = 0; i < count; ++i) v |= std::uint64_t{bytes[offset + static_cast<std::size_t>(i)]} << (8 * i);
    return v;
  };
  if (bytes.size() < 4 || !std::equal(bytes.begin(), bytes.begin() + 4, "MSPV")) throw FormatError("bad snapshot magic", 0);
  if (get(4, 4) != kSnapshotVersion) throw FormatError("unsupported snapshot version", 4);
  const std::uint64_t n = get(8, 8);
  if (n > (bytes.size() - 16) / 8) throw FormatError("truncated snapshot payload", bytes.size());
  if (bytes.size() != 16 + 8 * n) throw FormatError("trailing bytes after snapshot payload", 16 + 8 * n);
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = std::bit_cast<double>(get(16 + 8 * i, 8));
  return values;
}

void save_vector(const std::string& path, std::span<const double> values) {
  auto bytes = encode_vector(values);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FileError("short write to " + path);
}

std::vector<double> load_vector(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open snapshot " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_vector(bytes);
}

}  // namespace minima::optim
