#pragma once
// Mini-batch sampling, SGD / ADAM steps and the training loop, including the
// proximal ("conservative") variant and the augmentation / adversarial
// remedies for large-batch training.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "minima/data.hpp"
#include "minima/net.hpp"

namespace minima::optim {

enum class SamplingStrategy { EpochShuffle, UniformWithoutReplacement };

/// Emits fixed-size batches of distinct row indices, sorted ascending so the
/// gradient depends only on the batch contents.
class BatchSampler {
 public:
  BatchSampler(std::size_t dataset_size, std::size_t batch_size, SamplingStrategy strategy, std::uint64_t seed);

  std::vector<std::size_t> next();
  /// EpochShuffle: floor(M / |B|) (the partial tail is dropped);
  /// UniformWithoutReplacement: ceil(M / |B|).
  std::size_t batches_per_epoch() const;
  std::size_t batch_size() const { return batch_size_; }
  SamplingStrategy strategy() const { return strategy_; }

 private:
  std::size_t size_;
  std::size_t batch_size_;
  SamplingStrategy strategy_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::uint64_t draws_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> permutation_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;

  AdamState() = default;
  AdamState(std::size_t n, AdamConfig cfg) : config(cfg), m(n, 0.0), v(n, 0.0) {}
};

/// x <- x - lr * grad.
void sgd_step(std::span<double> x, std::span<const double> grad, double learning_rate);
/// Bias-corrected ADAM update in place.
void adam_step(AdamState& state, std::span<double> x, std::span<const double> grad);

struct StopRule {
  double rel_improvement_tol = 1e-4;
  std::size_t patience_epochs = 10;
  std::size_t max_epochs = 200;
};

enum class OptimizerKind { Adam, Sgd };

struct ConservativeConfig {
  double lambda = 1e-3;
  std::size_t inner_iters = 3;
};

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::Adam;
  AdamConfig adam;
  double sgd_learning_rate = 0.1;
  std::size_t batch_size = 256;
  SamplingStrategy sampling = SamplingStrategy::EpochShuffle;
  StopRule stop;
  bool snapshots = false;
  std::uint64_t seed = 0;

  std::optional<ConservativeConfig> conservative;
  /// Fresh augmented copy of the training set every epoch.
  std::optional<data::AugmentPolicy> augment;
  /// Each step averages the clean-batch and FGSM-batch gradients.
  std::optional<double> adversarial_eta;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

struct Snapshot {
  net::ParamVector params;
  net::RunningStats stats;
};

struct TrainTrace {
  std::vector<EpochRecord> records;  // epoch 0 is the starting point
  std::vector<Snapshot> snapshots;   // one per record when enabled
  net::ParamVector final_params;     // best full-train-loss epoch
  net::RunningStats final_stats;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::size_t iterations = 0;
};

/// Trains from `init` until the stop rule fires. `test` may be null.
TrainTrace train(const net::Network& network, const data::Dataset& train_set, const data::Dataset* test_set,
                 const TrainConfig& config, const net::ParamVector& init, const net::RunningStats& init_stats);

/// train() with the proximal outer step: every batch is used for
/// `inner_iters` ADAM steps on batch_loss(x) + lambda/2 |x - x_k|^2.
TrainTrace conservative_train(const net::Network& network, const data::Dataset& train_set,
                              const data::Dataset* test_set, TrainConfig config, double lambda,
                              std::size_t inner_iters, const net::ParamVector& init,
                              const net::RunningStats& init_stats);

// --- snapshot files ------------------------------------------------------------
// "MSPV", u32 version, u64 n, then n f64 values; all little-endian.

inline constexpr std::uint32_t kSnapshotVersion = 1;

std::vector<std::uint8_t> encode_vector(std::span<const double> values);
std::vector<double> decode_vector(std::span<const std::uint8_t> bytes);
void save_vector(const std::string& path, std::span<const double> values);
std::vector<double> load_vector(const std::string& path);

}  // namespace minima::optim
