#pragma once
// Fully-connected classifiers with batch normalization: layout of the flat
// weight vector, the mean cross-entropy training loss and its exact gradients
// with respect to parameters and inputs.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "minima/matrix.hpp"

namespace minima::net {

struct Dense {
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  bool has_bias = true;
};

struct Relu {};

struct BatchNorm {
  std::size_t dim = 0;
  double momentum = 0.9;
  double variance_epsilon = 1e-5;
};

struct SoftmaxCrossEntropy {
  std::size_t num_classes = 0;
};

using Layer = std::variant<Dense, Relu, BatchNorm, SoftmaxCrossEntropy>;

struct NetworkSpec {
  std::size_t input_dim = 0;
  std::vector<Layer> layers;

  /// Throws SpecError on incompatible dimensions or out-of-range constants.
  void validate() const;
  std::size_t num_classes() const;
  std::size_t batchnorm_count() const;
};

/// input -> [Dense -> (BatchNorm) -> ReLU]* -> Dense -> softmax.
/// Dense layers feeding a BatchNorm carry no bias (it would be cancelled).
NetworkSpec mlp(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t classes,
                bool batchnorm);

NetworkSpec parse_spec_json(const std::string& text);
std::string spec_to_json(const NetworkSpec& spec);

struct Slice {
  std::size_t offset = 0;
  std::size_t length = 0;
};

/// One slice per layer (parameter-free layers get length 0). Slices are
/// contiguous and cover [0, n).
struct Layout {
  std::vector<Slice> slices;
  std::size_t n = 0;
};

Layout build_layout(const NetworkSpec& spec);

struct ParamVector {
  std::vector<double> values;
  std::shared_ptr<const Layout> layout;

  std::size_t size() const { return values.size(); }
  std::span<const double> slice(std::size_t layer) const {
    const Slice& s = layout->slices.at(layer);
    return {values.data() + s.offset, s.length};
  }
  std::span<double> slice(std::size_t layer) {
    const Slice& s = layout->slices.at(layer);
    return {values.data() + s.offset, s.length};
  }
};

enum class EvalMode { Train, Eval };

/// Running (or batch) mean/variance of one BatchNorm layer.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> var;
  friend bool operator==(const NormStats&, const NormStats&) = default;
};

/// One entry per BatchNorm layer, in network order.
using RunningStats = std::vector<NormStats>;

std::vector<double> flatten_stats(const RunningStats& stats);
RunningStats unflatten_stats(const NetworkSpec& spec, std::span<const double> flat);

struct EvalRequest {
  bool probabilities = false;
  bool param_grad = false;
  bool input_grad = false;
};

struct Evaluation {
  double loss = 0.0;
  std::vector<double> grad;
  Matrix input_grad;
  Matrix probabilities;
  /// Train mode only: batch mean/variance seen by each BatchNorm layer.
  RunningStats batch_stats;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

class Network {
 public:
  explicit Network(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }
  const Layout& layout() const { return *layout_; }
  std::size_t num_params() const { return layout_->n; }
  std::size_t num_classes() const { return spec_.num_classes(); }
  std::size_t input_dim() const { return spec_.input_dim; }

  /// Glorot-uniform dense weights, zero biases, BatchNorm scale 1 / shift 0.
  ParamVector init_params(std::uint64_t seed) const;
  ParamVector wrap(std::vector<double> values) const;
  /// Running means 0, variances 1.
  RunningStats initial_stats() const;

  /// The one evaluation routine everything else is built on. Pure: Train
  /// mode reports batch statistics instead of mutating anything. `labels`
  /// may be empty when neither loss nor gradients are requested.
  Evaluation evaluate(const ParamVector& params, const RunningStats& stats, const Matrix& inputs,
                      std::span<const int> labels, EvalMode mode, EvalRequest request) const;

  /// Class probabilities. Train mode folds the batch statistics into `stats`.
  Matrix forward(const ParamVector& params, RunningStats& stats, const Matrix& inputs,
                 EvalMode mode) const;
  Matrix forward(const ParamVector& params, const RunningStats& stats, const Matrix& inputs) const;

  LossGrad loss_and_grad(const ParamVector& params, const RunningStats& stats, const Matrix& inputs,
                         std::span<const int> labels, EvalMode mode) const;
  double loss(const ParamVector& params, const RunningStats& stats, const Matrix& inputs,
              std::span<const int> labels, EvalMode mode = EvalMode::Eval) const;
  /// Gradient of the Eval-mode mean loss with respect to the input rows.
  Matrix input_gradient(const ParamVector& params, const RunningStats& stats, const Matrix& inputs,
                        std::span<const int> labels) const;
  /// Eval-mode top-1 accuracy; ties go to the lowest class index.
  double accuracy(const ParamVector& params, const RunningStats& stats, const Matrix& inputs,
                  std::span<const int> labels) const;

  /// running = momentum * running + (1 - momentum) * batch, per layer.
  void update_running_stats(RunningStats& running, const RunningStats& batch) const;

  /// Exact population statistics of every BatchNorm input over `inputs`,
  /// computed layer by layer at `params`.
  RunningStats population_stats(const ParamVector& params, const Matrix& inputs) const;

 private:
  NetworkSpec spec_;
  std::shared_ptr<const Layout> layout_;
};

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> row);

}  // namespace minima::net
