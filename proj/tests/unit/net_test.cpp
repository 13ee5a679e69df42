#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "../support.hpp"
#include "minima/errors.hpp"
#include "minima/net.hpp"
#include "minima/net_json.hpp"
#include "minima/parallel.hpp"

using namespace minima;
using namespace minima::net;
using testing::fd_gradient;
using testing::rel_error;

namespace {

NetworkSpec single_dense(std::size_t in, std::size_t out, bool bias) {
  return {in, {Dense{in, out, bias}, SoftmaxCrossEntropy{out}}};
}

}  // namespace

TEST_CASE("layout parameter counts") {
  CHECK(build_layout(single_dense(2, 3, true)).n == 9);
  CHECK(build_layout(NetworkSpec{4, {Dense{4, 4, false}, SoftmaxCrossEntropy{4}}}).n == 16);

  // 784-512x5-10, batch-normalized hidden layers without dense biases.
  const std::vector<std::size_t> hidden(5, 512);
  const NetworkSpec f1 = mlp(784, hidden, 10, true);
  // Per-layer count: dense weights, then BN scale and shift, output dense with bias.
  std::size_t expected = 0, width = 784;
  for (std::size_t h : hidden) {
    expected += width * h + 2 * h;
    width = h;
  }
  expected += width * 10 + 10;
  CHECK(expected == 1460234);
  CHECK(build_layout(f1).n == 1460234);
}

TEST_CASE("layout slices are contiguous and cover [0, n)") {
  testing::Rng rng(4);
  for (int k = 0; k < 10; ++k) {
    const Layout lay = build_layout(testing::random_spec(rng, k % 2 == 0));
    std::size_t cursor = 0;
    for (const Slice& s : lay.slices) {
      CHECK(s.offset == cursor);
      cursor += s.length;
    }
    CHECK(cursor == lay.n);
  }
}

TEST_CASE("spec validation rejects bad layouts") {
  CHECK_THROWS_AS(build_layout({3, {Dense{4, 2, true}, SoftmaxCrossEntropy{2}}}), SpecError);
  CHECK_THROWS_AS(build_layout({2, {Dense{2, 3, true}, SoftmaxCrossEntropy{2}}}), SpecError);
  CHECK_THROWS_AS(build_layout({2, {Dense{2, 2, true}}}), SpecError);
  CHECK_THROWS_AS(build_layout({2, {SoftmaxCrossEntropy{2}, Relu{}}}), SpecError);
  CHECK_THROWS_AS(build_layout({2, {BatchNorm{2, 1.0, 1e-5}, SoftmaxCrossEntropy{2}}}), SpecError);
  CHECK_THROWS_AS(build_layout({2, {BatchNorm{2, 0.9, 0.0}, SoftmaxCrossEntropy{2}}}), SpecError);
  CHECK_THROWS_AS(build_layout({2, {BatchNorm{3, 0.9, 1e-5}, SoftmaxCrossEntropy{2}}}), SpecError);
}

TEST_CASE("spec JSON round trip") {
  const NetworkSpec spec = mlp(6, std::vector<std::size_t>{5, 4}, 3, true);
  const NetworkSpec back = parse_spec_json(spec_to_json(spec));
  CHECK(spec_to_json(back) == spec_to_json(spec));
  CHECK(build_layout(back).n == build_layout(spec).n);

  const NetworkSpec parsed = parse_spec_json(
      R"({"input_dim":2,"layers":[{"kind":"dense","in":2,"out":3},{"kind":"relu"},)"
      R"({"kind":"batchnorm","dim":3},{"kind":"dense","in":3,"out":2,"bias":false},{"kind":"softmax_ce","classes":2}]})");
  CHECK(build_layout(parsed).n == 2 * 3 + 3 + 6 + 6);
  CHECK_THROWS_AS(parse_spec_json(R"({"input_dim":2,"layers":[{"kind":"conv"}]})"), SpecError);
  CHECK_THROWS_AS(parse_spec_json("not json"), SpecError);
}

TEST_CASE("init_params: determinism, zero biases, unit BN scale, Glorot bounds") {
  const Network network(mlp(7, std::vector<std::size_t>{9}, 3, true));
  const ParamVector a = network.init_params(5);
  const ParamVector b = network.init_params(5);
  CHECK(a.values == b.values);
  CHECK(network.init_params(6).values != a.values);

  const auto& layers = network.spec().layers;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto s = a.slice(l);
    if (const auto* d = std::get_if<Dense>(&layers[l])) {
      const double bound = std::sqrt(6.0 / static_cast<double>(d->fan_in + d->fan_out));
      for (std::size_t i = 0; i < d->fan_in * d->fan_out; ++i) CHECK(std::abs(s[i]) <= bound);
      if (d->has_bias)
        for (std::size_t i = d->fan_in * d->fan_out; i < s.size(); ++i) CHECK(s[i] == 0.0);
    } else if (const auto* bn = std::get_if<BatchNorm>(&layers[l])) {
      for (std::size_t i = 0; i < bn->dim; ++i) {
        CHECK(s[i] == 1.0);
        CHECK(s[bn->dim + i] == 0.0);
      }
    }
  }
}

TEST_CASE("init_params covers the Glorot interval") {
  // 400 x 250 weights: 1e5 samples.
  const Network network(single_dense(400, 250, true));
  const ParamVector p = network.init_params(11);
  const double a = std::sqrt(6.0 / 650.0);
  const auto w = p.slice(0).subspan(0, 400 * 250);
  const auto [lo, hi] = std::minmax_element(w.begin(), w.end());
  CHECK(*lo >= -a);
  CHECK(*hi <= a);
  CHECK((*hi - *lo) >= 0.99 * 2.0 * a);
}

TEST_CASE("forward: zero weights give uniform probabilities and loss ln K") {
  const Network network(mlp(4, std::vector<std::size_t>{6}, 10, false));
  const ParamVector zero = network.wrap(std::vector<double>(network.num_params(), 0.0));
  testing::Rng rng(1);
  const Matrix x = testing::random_matrix(5, 4, rng);
  const Matrix p = network.forward(zero, network.initial_stats(), x);
  for (double v : p.values()) CHECK(v == doctest::Approx(0.1).epsilon(1e-15));
  const std::vector<int> y = testing::random_labels(5, 10, rng);
  CHECK(network.loss(zero, {}, x, y) == doctest::Approx(std::log(10.0)).epsilon(1e-14));
  CHECK(std::abs(network.loss(zero, {}, x, y) - 2.302585) < 1e-6);
}

TEST_CASE("forward: probabilities sum to one and loss is non-negative") {
  testing::Rng rng(2);
  for (int k = 0; k < 10; ++k) {
    const Network network(testing::random_spec(rng, k % 2 == 1));
    ParamVector p = network.init_params(k);
    testing::jitter(p, rng);
    const Matrix x = testing::random_matrix(9, network.input_dim(), rng, 3.0);
    const auto y = testing::random_labels(9, network.num_classes(), rng);
    for (EvalMode mode : {EvalMode::Eval, EvalMode::Train}) {
      const Evaluation ev = network.evaluate(p, network.initial_stats(), x, y, mode, {.probabilities = true});
      for (std::size_t r = 0; r < ev.probabilities.rows(); ++r) {
        const auto row = ev.probabilities.row(r);
        CHECK(std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0) <= 1e-12);
      }
      CHECK(ev.loss >= 0.0);
    }
  }
}

TEST_CASE("forward: hand-evaluated Dense(1,2)") {
  const Network network(single_dense(1, 2, true));
  // W = [0.5, -1], b = [0.25, 0]; x = 2 -> logits (1.25, -2).
  const ParamVector p = network.wrap({0.5, -1.0, 0.25, 0.0});
  const Matrix x(1, 1, std::vector<double>{2.0});
  const Matrix prob = network.forward(p, {}, x);
  const double e0 = std::exp(1.25), e1 = std::exp(-2.0);
  CHECK(prob(0, 0) == doctest::Approx(e0 / (e0 + e1)).epsilon(1e-15));
  CHECK(prob(0, 1) == doctest::Approx(e1 / (e0 + e1)).epsilon(1e-15));
}

TEST_CASE("Train mode with BatchNorm needs two rows") {
  const Network network(mlp(3, std::vector<std::size_t>{4}, 2, true));
  const ParamVector p = network.init_params(0);
  RunningStats stats = network.initial_stats();
  const Matrix one(1, 3, 0.5);
  CHECK_THROWS_AS(network.forward(p, stats, one, EvalMode::Train), InvalidBatchError);
  CHECK_NOTHROW(network.forward(p, stats, one, EvalMode::Eval));
  CHECK_THROWS_AS(network.evaluate(p, stats, Matrix(0, 3), {}, EvalMode::Eval, {}), InvalidBatchError);
}

TEST_CASE("loss_and_grad: labels outside [0,K) are rejected") {
  const Network network(single_dense(2, 3, true));
  const ParamVector p = network.init_params(0);
  const Matrix x(2, 2, 1.0);
  CHECK_THROWS_AS(network.loss(p, {}, x, std::vector<int>{0, 3}), ShapeError);
  CHECK_THROWS_AS(network.loss(p, {}, x, std::vector<int>{-1, 0}), ShapeError);
}

TEST_CASE("non-finite activations raise a numeric error naming the layer") {
  const Network network(mlp(2, std::vector<std::size_t>{3}, 2, false));
  ParamVector p = network.init_params(0);
  p.values[0] = 1e308;
  const Matrix x(2, 2, 1e10);
  try {
    network.loss(p, {}, x, std::vector<int>{0, 1});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    REQUIRE(e.layer().has_value());
    CHECK(*e.layer() == 0);
  }
}

TEST_CASE("parameter and input gradients match central differences") {
  testing::Rng rng(77);
  for (int k = 0; k < 20; ++k) {
    CAPTURE(k);
    const bool bn = k % 2 == 0;
    const Network network(testing::random_spec(rng, bn));
    REQUIRE(network.num_params() <= 2000);
    ParamVector p = network.init_params(100 + k);
    testing::jitter(p, rng);
    RunningStats stats = network.initial_stats();
    for (auto& s : stats)
      for (std::size_t c = 0; c < s.mean.size(); ++c) {
        s.mean[c] = 0.3 * rng.normal();
        s.var[c] = 0.5 + rng.uniform(0.0, 1.0);
      }
    const Matrix x = testing::random_matrix(6, network.input_dim(), rng);
    const auto y = testing::random_labels(6, network.num_classes(), rng);

    for (EvalMode mode : {EvalMode::Eval, EvalMode::Train}) {
      const LossGrad lg = network.loss_and_grad(p, stats, x, y, mode);
      const auto fd = fd_gradient(p.values, [&](const std::vector<double>& v) {
        return network.loss(network.wrap(v), stats, x, y, mode);
      });
      CHECK(rel_error(lg.grad, fd) <= 1e-5);
    }

    const Matrix gx = network.input_gradient(p, stats, x, y);
    const auto fdx = fd_gradient(x.storage(), [&](const std::vector<double>& v) {
      return network.loss(p, stats, Matrix(x.rows(), x.cols(), v), y, EvalMode::Eval);
    });
    CHECK(rel_error(gx.values(), fdx) <= 1e-5);
  }
}

TEST_CASE("input gradient: zero first layer gives zero, linear model matches closed form") {
  const Network network(mlp(3, std::vector<std::size_t>{4}, 2, false));
  ParamVector p = network.init_params(3);
  std::fill(p.slice(0).begin(), p.slice(0).end(), 0.0);
  testing::Rng rng(8);
  const Matrix x = testing::random_matrix(4, 3, rng);
  const Matrix g = network.input_gradient(p, {}, x, std::vector<int>{0, 1, 1, 0});
  for (double v : g.values()) CHECK(v == 0.0);

  // One input, two logits (w0 x, w1 x), label 0: d/dx -log p0 = (p0 - 1) w0 + p1 w1.
  const Network lin(single_dense(1, 2, false));
  const double w0 = 0.7, w1 = -0.4, xv = 1.3;
  const ParamVector q = lin.wrap({w0, w1});
  const Matrix one(1, 1, std::vector<double>{xv});
  const double z0 = w0 * xv, z1 = w1 * xv;
  const double p0 = 1.0 / (1.0 + std::exp(z1 - z0)), p1 = 1.0 - p0;
  const double expected = (p0 - 1.0) * w0 + p1 * w1;
  CHECK(lin.input_gradient(q, {}, one, std::vector<int>{0})(0, 0) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("loss of a 2-batch is the mean of the 1-batch losses") {
  const Network network(mlp(3, std::vector<std::size_t>{5}, 3, true));
  ParamVector p = network.init_params(9);
  testing::Rng rng(9);
  testing::jitter(p, rng);
  const RunningStats stats = network.initial_stats();
  const Matrix x = testing::random_matrix(2, 3, rng);
  const std::vector<int> y{2, 0};
  const double l0 = network.loss(p, stats, Matrix(1, 3, std::vector<double>(x.row(0).begin(), x.row(0).end())),
                                 std::vector<int>{2});
  const double l1 = network.loss(p, stats, Matrix(1, 3, std::vector<double>(x.row(1).begin(), x.row(1).end())),
                                 std::vector<int>{0});
  CHECK(network.loss(p, stats, x, y) == doctest::Approx(0.5 * (l0 + l1)).epsilon(1e-15));
}

TEST_CASE("accuracy: identity, tie-break, hand set") {
  // Identity weights: argmax of the input itself.
  const Network network(single_dense(3, 3, false));
  const ParamVector eye = network.wrap({1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Matrix x(3, 3, std::vector<double>{5, 1, 0, 0, 2, 1, 0, 0, 9});
  CHECK(network.accuracy(eye, {}, x, std::vector<int>{0, 1, 2}) == 1.0);
  CHECK(network.accuracy(eye, {}, x, std::vector<int>{0, 1, 0}) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  const ParamVector zero = network.wrap(std::vector<double>(9, 0.0));
  CHECK(network.accuracy(zero, {}, x, std::vector<int>{0, 0, 0}) == 1.0);
  CHECK(argmax(std::vector<double>{0.2, 0.4, 0.4}) == 1);
}

TEST_CASE("BatchNorm Train mode normalizes each feature") {
  // Dense(2,2) identity -> BN(2) with unit scale -> softmax(2). Feature 1 is
  // constant, so it normalizes to 0 and log p0 - log p1 recovers x-hat of feature 0.
  const NetworkSpec spec{2, {Dense{2, 2, false}, BatchNorm{2, 0.9, 1e-5}, SoftmaxCrossEntropy{2}}};
  const Network network(spec);
  const ParamVector p = network.wrap({1, 0, 0, 1, 1, 1, 0, 0});
  testing::Rng rng(21);
  for (double scale : {0.1, 1.0, 10.0, 100.0}) {
    for (std::size_t batch : {2u, 3u, 17u, 64u}) {
      CAPTURE(scale);
      CAPTURE(batch);
      Matrix x(batch, 2, 0.25);
      for (std::size_t r = 0; r < batch; ++r) x(r, 0) = 3.0 + scale * rng.normal();
      RunningStats stats = network.initial_stats();
      const Matrix prob = network.forward(p, stats, x, EvalMode::Train);
      std::vector<double> xh(batch);
      for (std::size_t r = 0; r < batch; ++r) xh[r] = std::log(prob(r, 0)) - std::log(prob(r, 1));
      double mean = 0.0;
      for (double v : xh) mean += v;
      mean /= static_cast<double>(batch);
      double var = 0.0;
      for (double v : xh) var += (v - mean) * (v - mean);
      var /= static_cast<double>(batch);

      double mu = 0.0, s2 = 0.0;
      for (std::size_t r = 0; r < batch; ++r) mu += x(r, 0);
      mu /= static_cast<double>(batch);
      for (std::size_t r = 0; r < batch; ++r) s2 += (x(r, 0) - mu) * (x(r, 0) - mu);
      s2 /= static_cast<double>(batch);

      CHECK(std::abs(mean) <= 1e-9);
      CHECK(var == doctest::Approx(s2 / (s2 + 1e-5)).epsilon(1e-9));
      if (s2 > 10.0) CHECK(std::abs(var - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("running statistics: EMA update in Train mode only") {
  const Network network(mlp(2, std::vector<std::size_t>{3}, 2, true));
  const ParamVector p = network.init_params(1);
  testing::Rng rng(5);
  const Matrix x = testing::random_matrix(8, 2, rng);
  RunningStats stats = network.initial_stats();
  const RunningStats before = stats;
  network.forward(p, stats, x, EvalMode::Eval);
  CHECK(stats == before);

  const Evaluation ev = network.evaluate(p, stats, x, {}, EvalMode::Train, {});
  network.forward(p, stats, x, EvalMode::Train);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(stats[0].mean[c] == 0.9 * before[0].mean[c] + (1.0 - 0.9) * ev.batch_stats[0].mean[c]);
    CHECK(stats[0].var[c] == 0.9 * before[0].var[c] + (1.0 - 0.9) * ev.batch_stats[0].var[c]);
  }
}

TEST_CASE("population_stats equal the Train-mode batch statistics of the full set") {
  const Network network(mlp(4, std::vector<std::size_t>{6, 5}, 3, true));
  ParamVector p = network.init_params(2);
  testing::Rng rng(6);
  testing::jitter(p, rng);
  const Matrix x = testing::random_matrix(50, 4, rng);
  const RunningStats pop = network.population_stats(p, x);
  const Evaluation ev = network.evaluate(p, network.initial_stats(), x, {}, EvalMode::Train, {});
  REQUIRE(pop.size() == 2);
  CHECK(pop == ev.batch_stats);
}

TEST_CASE("Eval mode is pure and row permutation only permutes outputs") {
  const Network network(mlp(5, std::vector<std::size_t>{7}, 4, true));
  ParamVector p = network.init_params(3);
  testing::Rng rng(12);
  testing::jitter(p, rng);
  RunningStats stats = network.initial_stats();
  stats[0].mean[2] = 0.4;
  const Matrix x = testing::random_matrix(40, 5, rng);
  const auto y = testing::random_labels(40, 4, rng);
  const Evaluation a = network.evaluate(p, stats, x, y, EvalMode::Eval, {.probabilities = true, .param_grad = true});
  const Evaluation b = network.evaluate(p, stats, x, y, EvalMode::Eval, {.probabilities = true, .param_grad = true});
  CHECK(a.loss == b.loss);
  CHECK(a.grad == b.grad);
  CHECK(a.probabilities == b.probabilities);

  std::vector<std::size_t> perm(40);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[3], perm[17]);
  const Matrix xp = gather_rows(x, perm);
  std::vector<int> yp(40);
  for (std::size_t i = 0; i < 40; ++i) yp[i] = y[perm[i]];
  const Evaluation c = network.evaluate(p, stats, xp, yp, EvalMode::Eval, {.probabilities = true});
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t k = 0; k < 4; ++k) CHECK(c.probabilities(i, k) == a.probabilities(perm[i], k));
  CHECK(c.loss == doctest::Approx(a.loss).epsilon(1e-14));
}

TEST_CASE("evaluation is bit-identical across thread counts") {
  const Network network(mlp(8, std::vector<std::size_t>{16, 16}, 5, true));
  ParamVector p = network.init_params(4);
  testing::Rng rng(13);
  const Matrix x = testing::random_matrix(300, 8, rng);
  const auto y = testing::random_labels(300, 5, rng);
  parallel::set_threads(1);
  const Evaluation a = network.evaluate(p, network.initial_stats(), x, y, EvalMode::Train,
                                        {.param_grad = true, .input_grad = true});
  parallel::set_threads(4);
  const Evaluation b = network.evaluate(p, network.initial_stats(), x, y, EvalMode::Train,
                                        {.param_grad = true, .input_grad = true});
  parallel::set_threads(1);
  CHECK(a.loss == b.loss);
  CHECK(a.grad == b.grad);
  CHECK(a.input_grad == b.input_grad);
  CHECK(a.batch_stats == b.batch_stats);
}

TEST_CASE("stats flatten round trip") {
  const Network network(mlp(3, std::vector<std::size_t>{4, 2}, 2, true));
  RunningStats s = network.initial_stats();
  s[1].mean[1] = 7.5;
  s[0].var[3] = 0.125;
  CHECK(unflatten_stats(network.spec(), flatten_stats(s)) == s);
  CHECK_THROWS(unflatten_stats(network.spec(), std::vector<double>(3, 0.0)));
}
