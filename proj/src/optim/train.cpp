#include <cmath>

#include "minima/kernels.hpp"
#include "minima/optim.hpp"
#include "minima/rng.hpp"

namespace minima::optim {
namespace {

using net::EvalMode;

EpochRecord measure(const net::Network& network, const net::ParamVector& x, const net::RunningStats& stats,
                    const data::Dataset& train_set, const data::Dataset* test_set, std::size_t epoch) {
  EpochRecord rec;
  rec.epoch = epoch;
  auto ev = network.evaluate(x, stats, train_set.features, train_set.labels, EvalMode::Eval, {.probabilities = true});
  rec.train_loss = ev.loss;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < ev.probabilities.rows(); ++r)
    if (net::argmax(ev.probabilities.row(r)) == static_cast<std::size_t>(train_set.labels[r])) ++hits;
  rec.train_accuracy = static_cast<double>(hits) / static_cast<double>(train_set.size());
  rec.test_accuracy = test_set ? network.accuracy(x, stats, test_set->features, test_set->labels) : 0.0;
  return rec;
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

class Stepper {
 public:
  Stepper(const TrainConfig& cfg, std::size_t n) : cfg_(cfg), adam_(n, cfg.adam) {}

  void step(std::span<double> x, std::span<const double> g) {
    if (cfg_.optimizer == OptimizerKind::Adam)
      adam_step(adam_, x, g);
    else
      sgd_step(x, g, cfg_.sgd_learning_rate);
  }

 private:
  const TrainConfig& cfg_;
  AdamState adam_;
};

}  // namespace

TrainTrace train(const net::Network& network, const data::Dataset& train_set, const data::Dataset* test_set,
                 const TrainConfig& config, const net::ParamVector& init, const net::RunningStats& init_stats) {
  train_set.validate();
  if (init.size() != network.num_params()) throw ShapeError("initial parameters do not match network");
  if (config.conservative) {
    if (!(config.conservative->lambda >= 0.0)) throw ConfigError("proximal lambda must be non-negative");
    if (config.conservative->inner_iters == 0) throw ConfigError("conservative training needs inner_iters >= 1");
  }

  BatchSampler sampler(train_set.size(), config.batch_size, config.sampling, derive_seed(config.seed, {0x5a}));
  Stepper stepper(config, network.num_params());

  net::ParamVector x = init;
  net::RunningStats stats = init_stats;
  TrainTrace trace;

  auto record = [&](std::size_t epoch) {
    trace.records.push_back(measure(network, x, stats, train_set, test_set, epoch));
    if (config.snapshots) trace.snapshots.push_back({x, stats});
  };
  record(0);
  if (!std::isfinite(trace.records.back().train_loss))
    throw DivergedError("initial loss is not finite", x.values);

  double best_loss = trace.records.back().train_loss;
  double reference_loss = best_loss;
  Snapshot best{x, stats};
  std::size_t stale = 0;
  const bool patience_enabled = config.stop.rel_improvement_tol > 0.0;

  for (std::size_t epoch = 1; epoch <= config.stop.max_epochs; ++epoch) {
    std::optional<data::Dataset> augmented;
    if (config.augment) {
      data::AugmentPolicy policy = *config.augment;
      policy.seed = derive_seed(policy.seed, {epoch});
      augmented = data::augment(train_set, policy);
    }
    const data::Dataset& epoch_set = augmented ? *augmented : train_set;

    for (std::size_t it = 0; it < sampler.batches_per_epoch(); ++it, ++trace.iterations) {
      const auto idx = sampler.next();
      const Matrix xb = gather_rows(epoch_set.features, idx);
      std::vector<int> yb(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) yb[i] = epoch_set.labels[idx[i]];
      const std::vector<double> last_finite = x.values;

      try {
        if (config.conservative) {
          const double lambda = config.conservative->lambda;
          const std::vector<double> anchor = x.values;
          std::vector<double> best_x = anchor;
          double best_f = 0.0;
          for (std::size_t j = 0; j < config.conservative->inner_iters; ++j) {
            auto ev = network.evaluate(x, stats, xb, yb, EvalMode::Train, {.param_grad = true});
            const double f = ev.loss + (lambda > 0.0 ? 0.5 * lambda * sq_dist(x.values, anchor) : 0.0);
            if (j == 0) {
              best_f = f;
              network.update_running_stats(stats, ev.batch_stats);
            } else if (f < best_f) {
              best_f = f;
              best_x = x.values;
            }
            if (lambda > 0.0)
              for (std::size_t i = 0; i < ev.grad.size(); ++i) ev.grad[i] += lambda * (x.values[i] - anchor[i]);
            stepper.step(x.values, ev.grad);
          }
          if (lambda > 0.0) {
            // The last inner iterate still needs its objective value.
            const double f = network.loss(x, stats, xb, yb, EvalMode::Train) + 0.5 * lambda * sq_dist(x.values, anchor);
            if (f < best_f) best_x = x.values;
            x.values = std::move(best_x);
          }
        } else {
          auto ev = network.evaluate(x, stats, xb, yb, EvalMode::Train, {.param_grad = true});
          if (config.adversarial_eta) {
            data::Dataset clean;
            clean.features = xb;
            clean.labels = yb;
            clean.num_classes = train_set.num_classes;
            clean.range = train_set.range;
            const data::Dataset adv = data::adversarial_examples(network, x, stats, clean, *config.adversarial_eta);
            auto ev_adv = network.evaluate(x, stats, adv.features, yb, EvalMode::Train, {.param_grad = true});
            for (std::size_t i = 0; i < ev.grad.size(); ++i) ev.grad[i] = 0.5 * ev.grad[i] + 0.5 * ev_adv.grad[i];
          }
          network.update_running_stats(stats, ev.batch_stats);
          stepper.step(x.values, ev.grad);
        }
      } catch (const NumericError& e) {
        throw DivergedError(std::string("training diverged: ") + e.what(), last_finite);
      }
    }

    try {
      record(epoch);
    } catch (const NumericError& e) {
      throw DivergedError(std::string("training diverged: ") + e.what(), best.params.values);
    }
    trace.epochs_run = epoch;
    const double loss = trace.records.back().train_loss;
    if (!std::isfinite(loss)) throw DivergedError("training diverged: full-train loss is not finite", best.params.values);

    if (loss < best_loss) {
      best_loss = loss;
      best = {x, stats};
      trace.best_epoch = epoch;
    }
    if (loss < reference_loss * (1.0 - config.stop.rel_improvement_tol)) {
      reference_loss = loss;
      stale = 0;
    } else {
      ++stale;
    }
    if (patience_enabled && stale >= config.stop.patience_epochs) break;
  }

  trace.final_params = std::move(best.params);
  trace.final_stats = std::move(best.stats);
  return trace;
}

TrainTrace conservative_train(const net::Network& network, const data::Dataset& train_set,
                              const data::Dataset* test_set, TrainConfig config, double lambda,
                              std::size_t inner_iters, const net::ParamVector& init,
                              const net::RunningStats& init_stats) {
  config.conservative = ConservativeConfig{lambda, inner_iters};
  return train(network, train_set, test_set, config, init, init_stats);
}

}  // namespace minima::optim
