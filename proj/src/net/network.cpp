#include <algorithm>
#include <cmath>
#include <string>

#include "minima/kernels.hpp"
#include "minima/net.hpp"
#include "minima/parallel.hpp"
#include "minima/rng.hpp"

namespace minima::net {
namespace {

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

constexpr std::size_t kRowChunk = 64;

// Row-independent work; any partition gives identical results.
template <class Fn>
void for_rows(std::size_t rows, Fn&& fn) {
  const std::size_t chunks = (rows + kRowChunk - 1) / kRowChunk;
  parallel::for_each(chunks, [&](std::size_t c) {
    const std::size_t begin = c * kRowChunk;
    fn(begin, std::min(rows, begin + kRowChunk));
  });
}

void require_finite(const Matrix& m, std::size_t layer) {
  if (!m.all_finite())
    throw NumericError("non-finite activation in layer " + std::to_string(layer), layer);
}

struct BnCache {
  Matrix normalized;            // x-hat, before the affine map
  std::vector<double> inv_std;  // 1 / sqrt(var + eps)
};

}  // namespace

void NetworkSpec::validate() const {
  if (input_dim == 0) throw SpecError("input_dim must be positive");
  if (layers.empty()) throw SpecError("network has no layers");
  std::size_t cur = input_dim;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const bool last = i + 1 == layers.size();
    const std::string where = "layer " + std::to_string(i) + ": ";
    std::visit(Overloaded{
                   [&](const Dense& d) {
                     if (d.fan_in == 0 || d.fan_out == 0) throw SpecError(where + "dense dims must be positive");
                     if (d.fan_in != cur)
                       throw SpecError(where + "dense fan_in " + std::to_string(d.fan_in) +
                                       " does not match incoming width " + std::to_string(cur));
                     cur = d.fan_out;
                   },
                   [&](const Relu&) {},
                   [&](const BatchNorm& b) {
                     if (b.dim != cur)
                       throw SpecError(where + "batchnorm dim " + std::to_string(b.dim) +
                                       " does not match incoming width " + std::to_string(cur));
                     if (!(b.momentum > 0.0 && b.momentum < 1.0))
                       throw SpecError(where + "batchnorm momentum must lie in (0,1)");
                     if (!(b.variance_epsilon > 0.0)) throw SpecError(where + "variance_epsilon must be positive");
                   },
                   [&](const SoftmaxCrossEntropy& s) {
                     if (!last) throw SpecError(where + "softmax output must be the final layer");
                     if (s.num_classes < 2) throw SpecError(where + "need at least two classes");
                     if (s.num_classes != cur)
                       throw SpecError(where + "softmax classes " + std::to_string(s.num_classes) +
                                       " does not match incoming width " + std::to_string(cur));
                   },
               },
               layers[i]);
  }
  if (!std::holds_alternative<SoftmaxCrossEntropy>(layers.back()))
    throw SpecError("final layer must be softmax_ce");
}

std::size_t NetworkSpec::num_classes() const {
  return std::get<SoftmaxCrossEntropy>(layers.back()).num_classes;
}

std::size_t NetworkSpec::batchnorm_count() const {
  return static_cast<std::size_t>(std::count_if(layers.begin(), layers.end(), [](const Layer& l) {
    return std::holds_alternative<BatchNorm>(l);
  }));
}

NetworkSpec mlp(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t classes,
                bool batchnorm) {
  NetworkSpec spec;
  spec.input_dim = input_dim;
  std::size_t cur = input_dim;
  for (std::size_t width : hidden) {
    spec.layers.emplace_back(Dense{cur, width, !batchnorm});
    if (batchnorm) spec.layers.emplace_back(BatchNorm{width});
    spec.layers.emplace_back(Relu{});
    cur = width;
  }
  spec.layers.emplace_back(Dense{cur, classes, true});
  spec.layers.emplace_back(SoftmaxCrossEntropy{classes});
  spec.validate();
  return spec;
}

Layout build_layout(const NetworkSpec& spec) {
  spec.validate();
  Layout layout;
  std::size_t offset = 0;
  for (const Layer& layer : spec.layers) {
    std::size_t len = std::visit(Overloaded{
                                     [](const Dense& d) { return d.fan_in * d.fan_out + (d.has_bias ? d.fan_out : 0); },
                                     [](const BatchNorm& b) { return 2 * b.dim; },
                                     [](const auto&) { return std::size_t{0}; },
                                 },
                                 layer);
    layout.slices.push_back({offset, len});
    offset += len;
  }
  layout.n = offset;
  return layout;
}

std::vector<double> flatten_stats(const RunningStats& stats) {
  std::vector<double> flat;
  for (const auto& s : stats) {
    flat.insert(flat.end(), s.mean.begin(), s.mean.end());
    flat.insert(flat.end(), s.var.begin(), s.var.end());
  }
  return flat;
}

RunningStats unflatten_stats(const NetworkSpec& spec, std::span<const double> flat) {
  RunningStats stats;
  std::size_t pos = 0;
  for (const Layer& layer : spec.layers) {
    if (const auto* bn = std::get_if<BatchNorm>(&layer)) {
      if (pos + 2 * bn->dim > flat.size()) throw ShapeError("running-stat vector too short for network");
      NormStats s;
      s.mean.assign(flat.begin() + pos, flat.begin() + pos + bn->dim);
      s.var.assign(flat.begin() + pos + bn->dim, flat.begin() + pos + 2 * bn->dim);
      pos += 2 * bn->dim;
      stats.push_back(std::move(s));
    }
  }
  if (pos != flat.size()) throw ShapeError("running-stat vector length does not match network");
  return stats;
}

Network::Network(NetworkSpec spec)
    : spec_(std::move(spec)), layout_(std::make_shared<const Layout>(build_layout(spec_))) {}

ParamVector Network::init_params(std::uint64_t seed) const {
  ParamVector p{std::vector<double>(layout_->n, 0.0), layout_};
  for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
    auto dst = p.slice(l);
    if (const auto* d = std::get_if<Dense>(&spec_.layers[l])) {
      const double a = std::sqrt(6.0 / static_cast<double>(d->fan_in + d->fan_out));
      Rng rng(derive_seed(seed, {l}));
      for (std::size_t i = 0; i < d->fan_in * d->fan_out; ++i) dst[i] = rng.uniform(-a, a);
    } else if (const auto* b = std::get_if<BatchNorm>(&spec_.layers[l])) {
      std::fill_n(dst.begin(), b->dim, 1.0);
    }
  }
  return p;
}

ParamVector Network::wrap(std::vector<double> values) const {
  if (values.size() != layout_->n)
    throw ShapeError("parameter vector has " + std::to_string(values.size()) + " entries, network needs " +
                     std::to_string(layout_->n));
  return {std::move(values), layout_};
}

RunningStats Network::initial_stats() const {
  RunningStats stats;
  for (const Layer& layer : spec_.layers)
    if (const auto* bn = std::get_if<BatchNorm>(&layer))
      stats.push_back({std::vector<double>(bn->dim, 0.0), std::vector<double>(bn->dim, 1.0)});
  return stats;
}

Evaluation Network::evaluate(const ParamVector& params, const RunningStats& stats, const Matrix& inputs,
                             std::span<const int> labels, EvalMode mode, EvalRequest request) const {
  const std::size_t batch = inputs.rows();
  const std::size_t classes = num_classes();
  const bool need_labels = !labels.empty() || request.param_grad || request.input_grad;
  const bool backward = request.param_grad || request.input_grad;

  if (params.size() != layout_->n) throw ShapeError("parameter vector length does not match network");
  if (inputs.cols() != spec_.input_dim)
    throw ShapeError("input width " + std::to_string(inputs.cols()) + " != network input_dim " +
                     std::to_string(spec_.input_dim));
  if (batch == 0) throw InvalidBatchError("empty batch");
  if (mode == EvalMode::Train && batch < 2 && spec_.batchnorm_count() > 0)
    throw InvalidBatchError("Train mode with BatchNorm needs a batch of at least 2 rows");
  if (stats.size() != spec_.batchnorm_count()) throw ShapeError("running stats do not match network");
  if (need_labels) {
    if (labels.size() != batch) throw ShapeError("label count does not match batch size");
    for (int y : labels)
      if (y < 0 || static_cast<std::size_t>(y) >= classes)
        throw ShapeError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
  }

  const std::size_t L = spec_.layers.size();
  // acts[l] is the input of layer l; acts[L] holds the probabilities.
  std::vector<Matrix> acts(L + 1);
  std::vector<BnCache> bn(L);
  std::vector<double> row_loss(need_labels ? batch : 0);
  Evaluation out;
  const Matrix* current = &inputs;
  std::size_t bn_index = 0;

  for (std::size_t l = 0; l < L; ++l) {
    const Layer& layer = spec_.layers[l];
    const auto theta = params.slice(l);
    Matrix next;

    if (const auto* d = std::get_if<Dense>(&layer)) {
      next = Matrix(batch, d->fan_out);
      const double* W = theta.data();
      const double* bias = d->has_bias ? theta.data() + d->fan_in * d->fan_out : nullptr;
      const auto& k = kernels::active();
      for_rows(batch, [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
          auto h = current->row(r);
          auto y = next.row(r);
          if (bias) std::copy_n(bias, d->fan_out, y.begin());
          for (std::size_t j = 0; j < d->fan_in; ++j)
            if (h[j] != 0.0) k.axpy(h[j], W + j * d->fan_out, y.data(), d->fan_out);
        }
      });
    } else if (std::holds_alternative<Relu>(layer)) {
      next = *current;
      kernels::active().relu(next.values().data(), next.size());
    } else if (const auto* b = std::get_if<BatchNorm>(&layer)) {
      const std::size_t D = b->dim;
      std::vector<double> mean, var;
      if (mode == EvalMode::Train) {
        mean = parallel::reduce_rows(batch, D, [&](std::size_t r0, std::size_t r1, std::span<double> acc) {
          for (std::size_t r = r0; r < r1; ++r) kernels::add(current->row(r), acc);
        });
        kernels::scale(1.0 / static_cast<double>(batch), mean);
        var = parallel::reduce_rows(batch, D, [&](std::size_t r0, std::size_t r1, std::span<double> acc) {
          for (std::size_t r = r0; r < r1; ++r) {
            auto h = current->row(r);
            for (std::size_t c = 0; c < D; ++c) {
              const double dv = h[c] - mean[c];
              acc[c] += dv * dv;
            }
          }
        });
        kernels::scale(1.0 / static_cast<double>(batch), var);
        out.batch_stats.push_back({mean, var});
      } else {
        mean = stats[bn_index].mean;
        var = stats[bn_index].var;
      }
      BnCache& cache = bn[l];
      cache.inv_std.resize(D);
      for (std::size_t c = 0; c < D; ++c) cache.inv_std[c] = 1.0 / std::sqrt(var[c] + b->variance_epsilon);
      cache.normalized = Matrix(batch, D);
      next = Matrix(batch, D);
      const double* gamma = theta.data();
      const double* beta = theta.data() + D;
      for_rows(batch, [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
          auto h = current->row(r);
          auto xh = cache.normalized.row(r);
          auto y = next.row(r);
          for (std::size_t c = 0; c < D; ++c) {
            xh[c] = (h[c] - mean[c]) * cache.inv_std[c];
            y[c] = gamma[c] * xh[c] + beta[c];
          }
        }
      });
      ++bn_index;
    } else {
      next = Matrix(batch, classes);
      for_rows(batch, [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
          auto z = current->row(r);
          auto p = next.row(r);
          const double zmax = *std::max_element(z.begin(), z.end());
          double s = 0.0;
          for (std::size_t c = 0; c < classes; ++c) {
            p[c] = std::exp(z[c] - zmax);
            s += p[c];
          }
          for (std::size_t c = 0; c < classes; ++c) p[c] /= s;
          if (need_labels) row_loss[r] = std::log(s) + zmax - z[static_cast<std::size_t>(labels[r])];
        }
      });
    }

    require_finite(next, l);
    acts[l + 1] = std::move(next);
    current = &acts[l + 1];
  }

  if (need_labels) {
    out.loss = parallel::pairwise_sum(row_loss) / static_cast<double>(batch);
    if (!std::isfinite(out.loss)) throw NumericError("non-finite loss", L - 1);
  }
  if (request.probabilities) out.probabilities = acts[L];
  if (!backward) return out;

  // Backward pass. `delta` is dLoss/d(output of layer l).
  if (request.param_grad) out.grad.assign(layout_->n, 0.0);
  Matrix delta = acts[L];
  {
    const double inv_b = 1.0 / static_cast<double>(batch);
    for (std::size_t r = 0; r < batch; ++r) {
      auto g = delta.row(r);
      g[static_cast<std::size_t>(labels[r])] -= 1.0;
      for (double& v : g) v *= inv_b;
    }
  }
  // Softmax layer is parameter free; delta now holds dLoss/d(logits).
  for (std::size_t li = L - 1; li-- > 0;) {
    const Layer& layer = spec_.layers[li];
    const Matrix& in = li == 0 ? inputs : acts[li];
    const bool need_input_delta = li > 0 || request.input_grad;
    const auto theta = params.slice(li);
    Matrix prev;

    if (const auto* d = std::get_if<Dense>(&layer)) {
      const std::size_t nw = d->fan_in * d->fan_out;
      if (request.param_grad) {
        const std::size_t width = nw + (d->has_bias ? d->fan_out : 0);
        auto sums = parallel::reduce_rows(batch, width, [&](std::size_t r0, std::size_t r1, std::span<double> acc) {
          const auto& k = kernels::active();
          for (std::size_t r = r0; r < r1; ++r) {
            auto h = in.row(r);
            auto dy = delta.row(r);
            for (std::size_t j = 0; j < d->fan_in; ++j)
              if (h[j] != 0.0) k.axpy(h[j], dy.data(), acc.data() + j * d->fan_out, d->fan_out);
            if (d->has_bias) k.add(dy.data(), acc.data() + nw, d->fan_out);
          }
        });
        std::copy(sums.begin(), sums.end(), out.grad.begin() + static_cast<std::ptrdiff_t>(layout_->slices[li].offset));
      }
      if (need_input_delta) {
        prev = Matrix(batch, d->fan_in);
        const double* W = theta.data();
        const auto& k = kernels::active();
        for_rows(batch, [&](std::size_t r0, std::size_t r1) {
          for (std::size_t r = r0; r < r1; ++r) {
            auto dy = delta.row(r);
            auto dh = prev.row(r);
            for (std::size_t j = 0; j < d->fan_in; ++j) dh[j] = k.dot(dy.data(), W + j * d->fan_out, d->fan_out);
          }
        });
      }
    } else if (std::holds_alternative<Relu>(layer)) {
      if (need_input_delta) {
        prev = std::move(delta);
        // ReLU output is positive exactly where its input is.
        kernels::active().relu_backward(acts[li + 1].values().data(), prev.values().data(), prev.size());
      }
    } else if (const auto* b = std::get_if<BatchNorm>(&layer)) {
      const std::size_t D = b->dim;
      const BnCache& cache = bn[li];
      auto sums = parallel::reduce_rows(batch, 2 * D, [&](std::size_t r0, std::size_t r1, std::span<double> acc) {
        for (std::size_t r = r0; r < r1; ++r) {
          auto dy = delta.row(r);
          auto xh = cache.normalized.row(r);
          for (std::size_t c = 0; c < D; ++c) {
            acc[c] += dy[c] * xh[c];
            acc[D + c] += dy[c];
          }
        }
      });
      const double* dgamma = sums.data();
      const double* dbeta = sums.data() + D;
      if (request.param_grad)
        std::copy(sums.begin(), sums.end(), out.grad.begin() + static_cast<std::ptrdiff_t>(layout_->slices[li].offset));
      if (need_input_delta) {
        const double* gamma = theta.data();
        prev = Matrix(batch, D);
        const double B = static_cast<double>(batch);
        for_rows(batch, [&](std::size_t r0, std::size_t r1) {
          for (std::size_t r = r0; r < r1; ++r) {
            auto dy = delta.row(r);
            auto xh = cache.normalized.row(r);
            auto dh = prev.row(r);
            for (std::size_t c = 0; c < D; ++c) {
              if (mode == EvalMode::Train)
                dh[c] = gamma[c] * cache.inv_std[c] / B * (B * dy[c] - dbeta[c] - xh[c] * dgamma[c]);
              else
                dh[c] = dy[c] * gamma[c] * cache.inv_std[c];
            }
          }
        });
      }
    }

    if (need_input_delta) {
      require_finite(prev, li);
      delta = std::move(prev);
    }
  }

  if (request.param_grad)
    for (double g : out.grad)
      if (!std::isfinite(g)) throw NumericError("non-finite parameter gradient");
  if (request.input_grad) out.input_grad = std::move(delta);
  return out;
}

Matrix Network::forward(const ParamVector& params, RunningStats& stats, const Matrix& inputs,
                        EvalMode mode) const {
  Evaluation ev = evaluate(params, stats, inputs, {}, mode, {.probabilities = true});
  if (mode == EvalMode::Train) update_running_stats(stats, ev.batch_stats);
  return std::move(ev.probabilities);
}

Matrix Network::forward(const ParamVector& params, const RunningStats& stats, const Matrix& inputs) const {
  return std::move(evaluate(params, stats, inputs, {}, EvalMode::Eval, {.probabilities = true}).probabilities);
}

LossGrad Network::loss_and_grad(const ParamVector& params, const RunningStats& stats, const Matrix& inputs,
                                std::span<const int> labels, EvalMode mode) const {
  if (labels.empty()) throw InvalidBatchError("empty batch");
  Evaluation ev = evaluate(params, stats, inputs, labels, mode, {.param_grad = true});
  return {ev.loss, std::move(ev.grad)};
}

double Network::loss(const ParamVector& params, const RunningStats& stats, const Matrix& inputs,
                     std::span<const int> labels, EvalMode mode) const {
  if (labels.empty()) throw InvalidBatchError("empty batch");
  return evaluate(params, stats, inputs, labels, mode, {}).loss;
}

Matrix Network::input_gradient(const ParamVector& params, const RunningStats& stats, const Matrix& inputs,
                               std::span<const int> labels) const {
  if (labels.empty()) throw InvalidBatchError("empty batch");
  return std::move(evaluate(params, stats, inputs, labels, EvalMode::Eval, {.input_grad = true}).input_grad);
}

double Network::accuracy(const ParamVector& params, const RunningStats& stats, const Matrix& inputs,
                         std::span<const int> labels) const {
  if (inputs.rows() == 0) throw InvalidBatchError("accuracy of an empty dataset");
  if (labels.size() != inputs.rows()) throw ShapeError("label count does not match rows");
  Matrix probs = forward(params, stats, inputs);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < probs.rows(); ++r)
    if (argmax(probs.row(r)) == static_cast<std::size_t>(labels[r])) ++hits;
  return static_cast<double>(hits) / static_cast<double>(probs.rows());
}

void Network::update_running_stats(RunningStats& running, const RunningStats& batch) const {
  std::size_t k = 0;
  for (const Layer& layer : spec_.layers) {
    const auto* bn = std::get_if<BatchNorm>(&layer);
    if (!bn) continue;
    auto& r = running.at(k);
    const auto& b = batch.at(k);
    for (std::size_t c = 0; c < bn->dim; ++c) {
      r.mean[c] = bn->momentum * r.mean[c] + (1.0 - bn->momentum) * b.mean[c];
      r.var[c] = bn->momentum * r.var[c] + (1.0 - bn->momentum) * b.var[c];
    }
    ++k;
  }
}

RunningStats Network::population_stats(const ParamVector& params, const Matrix& inputs) const {
  if (spec_.batchnorm_count() == 0) return {};
  return evaluate(params, initial_stats(), inputs, {}, EvalMode::Train, {}).batch_stats;
}

std::size_t argmax(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i)
    if (row[i] > row[best]) best = i;
  return best;
}

}  // namespace minima::net
