#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <zlib.h>

#include "../support.hpp"
#include "minima/data.hpp"
#include "minima/errors.hpp"
#include "minima/optim.hpp"
#include "minima/parallel.hpp"

using namespace minima;
using namespace minima::data;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> be32(std::uint32_t v) {
  return {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 8),
          static_cast<std::uint8_t>(v)};
}

std::vector<std::uint8_t> image_file(std::uint32_t n, std::uint32_t h, std::uint32_t w,
                                     const std::vector<std::uint8_t>& pixels) {
  std::vector<std::uint8_t> out;
  for (std::uint32_t v : {kIdxImageMagic, n, h, w}) {
    const auto b = be32(v);
    out.insert(out.end(), b.begin(), b.end());
  }
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

std::vector<std::uint8_t> label_file(const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint8_t> out;
  for (std::uint32_t v : {kIdxLabelMagic, static_cast<std::uint32_t>(labels.size())}) {
    const auto b = be32(v);
    out.insert(out.end(), b.begin(), b.end());
  }
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

SyntheticSpec small_spec(double separation, std::uint64_t seed) {
  SyntheticSpec s;
  s.train_size = 600;
  s.test_size = 600;
  s.dim = 12;
  s.classes = 4;
  s.separation = separation;
  s.seed = seed;
  s.image = ImageShape{3, 4};
  return s;
}

double linear_test_accuracy(const SyntheticSpec& spec) {
  const auto [train, test] = synth_gaussian(spec);
  const net::Network network(net::NetworkSpec{spec.dim, {net::Dense{spec.dim, spec.classes, true},
                                                          net::SoftmaxCrossEntropy{spec.classes}}});
  optim::TrainConfig cfg;
  cfg.batch_size = 50;
  cfg.adam.learning_rate = 0.01;
  cfg.stop = {0.0, 1, 30};
  const auto tr = optim::train(network, train, nullptr, cfg, network.init_params(0), {});
  return network.accuracy(tr.final_params, tr.final_stats, test.features, test.labels);
}

}  // namespace

TEST_CASE("parse a hand-built IDX pair") {
  const auto img = image_file(2, 2, 2, {0, 51, 255, 102, 1, 2, 3, 4});
  const auto lab = label_file({3, 7});
  const Dataset ds = parse_idx(img, lab);
  CHECK(ds.size() == 2);
  CHECK(ds.dim() == 4);
  CHECK(ds.image == ImageShape{2, 2});
  CHECK(ds.features(0, 2) == 1.0);
  CHECK(ds.features(0, 1) == 51.0 / 255.0);
  CHECK(ds.labels == std::vector<int>{3, 7});
  CHECK(ds.range == ValueRange{0.0, 1.0});
}

TEST_CASE("IDX format errors") {
  const auto img = image_file(2, 2, 2, {0, 1, 2, 3, 4, 5, 6, 7});
  const auto lab = label_file({0, 1});
  auto truncated = img;
  truncated.pop_back();
  CHECK_THROWS_AS(parse_idx(truncated, lab), FormatError);
  auto trailing = img;
  trailing.push_back(0);
  CHECK_THROWS_AS(parse_idx(trailing, lab), FormatError);
  CHECK_THROWS_AS(parse_idx(img, label_file({0, 1, 1})), FormatError);
  CHECK_THROWS_AS(parse_idx(img, label_file({0, 11})), FormatError);
  CHECK_THROWS_AS(parse_idx(std::vector<std::uint8_t>(10, 0), lab), FormatError);
  CHECK_THROWS_AS(parse_idx(lab, img), FormatError);
  try {
    parse_idx(img, label_file({0, 12}));
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 9);
  }
}

TEST_CASE("single-byte header corruptions are all rejected") {
  Rng rng(7);
  const auto img = image_file(3, 2, 3, std::vector<std::uint8_t>(18, 9));
  const auto lab = label_file({1, 2, 3});
  REQUIRE_NOTHROW(parse_idx(img, lab));
  for (int k = 0; k < 100; ++k) {
    auto i2 = img;
    auto l2 = lab;
    const bool in_images = k % 3 != 2;
    auto& target = in_images ? i2 : l2;
    const std::size_t header = in_images ? 16 : 8;
    const std::size_t pos = rng.index(header);
    const auto delta = static_cast<std::uint8_t>(1 + rng.index(255));
    target[pos] = static_cast<std::uint8_t>(target[pos] ^ delta);
    CAPTURE(pos);
    CHECK_THROWS_AS(parse_idx(i2, l2), FormatError);
  }
}

TEST_CASE("IDX files round trip, raw and gzip") {
  const auto [train, test] = synth_gaussian(small_spec(3.0, 1));
  const Dataset q = quantize_unit_bytes(train);
  for (double v : q.features.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  const fs::path dir = fs::temp_directory_path() / "minima_data_test";
  fs::create_directories(dir);
  write_idx(q, (dir / "img").string(), (dir / "lab").string());
  const Dataset back = load_idx((dir / "img").string(), (dir / "lab").string(), q.num_classes);
  CHECK(back.features == q.features);
  CHECK(back.labels == q.labels);
  CHECK(back.image == q.image);

  // Gzip-compress the same bytes and read them back.
  const auto [ib, lb] = encode_idx(q);
  for (const auto& [name, bytes] : {std::pair{"img.gz", ib}, std::pair{"lab.gz", lb}}) {
    gzFile f = gzopen((dir / name).string().c_str(), "wb");
    REQUIRE(f);
    gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    gzclose(f);
  }
  const Dataset gz = load_idx((dir / "img.gz").string(), (dir / "lab.gz").string(), q.num_classes);
  CHECK(gz.features == q.features);
  CHECK(gz.labels == q.labels);

  CHECK_THROWS_AS(load_idx((dir / "missing").string(), (dir / "lab").string()), FileError);
  CHECK_THROWS_AS(encode_idx(train), FormatError);  // not byte multiples
  fs::remove_all(dir);
}

TEST_CASE("synthetic data: determinism, balance, validation") {
  const auto a = synth_gaussian(small_spec(3.0, 5));
  const auto b = synth_gaussian(small_spec(3.0, 5));
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  CHECK(a.first.features != synth_gaussian(small_spec(3.0, 6)).first.features);
  CHECK(a.first.features != a.second.features);
  std::vector<int> counts(4, 0);
  for (int y : a.first.labels) counts[static_cast<std::size_t>(y)]++;
  for (int c : counts) CHECK(c == 150);
  CHECK_NOTHROW(a.first.validate());

  SyntheticSpec bad = small_spec(3.0, 0);
  bad.classes = 1;
  CHECK_THROWS_AS(synth_gaussian(bad), ConfigError);
  bad = small_spec(-1.0, 0);
  CHECK_THROWS_AS(synth_gaussian(bad), ConfigError);
  bad = small_spec(3.0, 0);
  bad.image = ImageShape{5, 5};
  CHECK_THROWS_AS(synth_gaussian(bad), ConfigError);
}

TEST_CASE("synthetic data: zero separation is chance, large separation is separable") {
  SyntheticSpec zero = small_spec(0.0, 2);
  zero.classes = 10;
  zero.train_size = zero.test_size = 2000;
  CHECK(std::abs(linear_test_accuracy(zero) - 0.1) <= 0.05);
  CHECK(linear_test_accuracy(small_spec(10.0, 3)) >= 0.99);
}

TEST_CASE("augment: zero limits are the identity") {
  const auto [train, test] = synth_gaussian(small_spec(3.0, 4));
  const Dataset q = quantize_unit_bytes(train);
  const Dataset out = augment(q, AugmentPolicy{false, 0.0, 0.0, 123});
  CHECK(out == q);
}

TEST_CASE("augment: flip twice restores the input") {
  Rng rng(9);
  const ImageShape shape{5, 7};
  std::vector<double> px(35);
  for (double& v : px) v = rng.uniform(0.0, 1.0);
  const ImageTransform flip{true, 0.0, 0.0, 0.0};
  const auto once = transform_image(px, shape, flip);
  CHECK(once[0] == px[6]);
  CHECK(transform_image(once, shape, flip) == px);
}

TEST_CASE("augment: one-pixel translation of a 2x2 image") {
  const std::vector<double> px{0.1, 0.2, 0.3, 0.4};
  const auto out = transform_image(px, ImageShape{2, 2}, ImageTransform{false, 0.0, 0.0, 1.0});
  CHECK(out == std::vector<double>{0.0, 0.1, 0.0, 0.3});
  const auto down = transform_image(px, ImageShape{2, 2}, ImageTransform{false, 0.0, 1.0, 0.0});
  CHECK(down == std::vector<double>{0.0, 0.0, 0.1, 0.2});
  // A quarter turn of a square image about its centre permutes pixels.
  const auto rot = transform_image(px, ImageShape{2, 2}, ImageTransform{false, 90.0, 0.0, 0.0});
  CHECK(std::multiset<double>(rot.begin(), rot.end()).size() == 4);
  for (double v : rot) CHECK(std::abs(v - 0.1) * std::abs(v - 0.2) * std::abs(v - 0.3) * std::abs(v - 0.4) < 1e-12);
}

TEST_CASE("augment: size, labels and value range are preserved; per-seed determinism") {
  const auto [train, test] = synth_gaussian(small_spec(3.0, 8));
  const Dataset q = quantize_unit_bytes(train);
  const AugmentPolicy policy{true, 10.0, 0.2, 77};
  parallel::set_threads(1);
  const Dataset a = augment(q, policy);
  parallel::set_threads(3);
  const Dataset b = augment(q, policy);
  parallel::set_threads(1);
  CHECK(a == b);
  CHECK(a.size() == q.size());
  CHECK(a.labels == q.labels);
  for (double v : a.features.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(a.features != q.features);
  CHECK(augment(q, AugmentPolicy{true, 10.0, 0.2, 78}).features != a.features);

  Dataset flat = q;
  flat.image.reset();
  CHECK_THROWS_AS(augment(flat, policy), ShapeError);
  CHECK_THROWS_AS(augment(q, AugmentPolicy{true, -1.0, 0.2, 0}), ConfigError);
}

TEST_CASE("default augmentation limits") {
  const AugmentPolicy p;
  CHECK(p.max_rotation_degrees == 10.0);
  CHECK(p.max_translation_fraction == 0.2);
  CHECK(p.horizontal_flip);
}

TEST_CASE("adversarial examples") {
  const auto [train, test] = synth_gaussian(small_spec(2.0, 10));
  const Dataset q = quantize_unit_bytes(train);
  const net::Network network(net::mlp(12, std::vector<std::size_t>{16}, 4, false));
  optim::TrainConfig cfg;
  cfg.batch_size = 30;
  cfg.adam.learning_rate = 0.01;
  cfg.stop = {0.0, 1, 20};
  const auto tr = optim::train(network, q, nullptr, cfg, network.init_params(0), {});

  CHECK(adversarial_examples(network, tr.final_params, tr.final_stats, q, 0.0) == q);

  const double eta = 0.1;
  const Dataset adv = adversarial_examples(network, tr.final_params, tr.final_stats, q, eta);
  CHECK(adv.labels == q.labels);
  for (std::size_t i = 0; i < q.features.size(); ++i) {
    const double d = std::abs(adv.features.values()[i] - q.features.values()[i]);
    CHECK(d <= eta + 1e-15);
    CHECK(adv.features.values()[i] >= 0.0);
    CHECK(adv.features.values()[i] <= 1.0);
  }
  const double clean = network.accuracy(tr.final_params, tr.final_stats, q.features, q.labels);
  const double attacked = network.accuracy(tr.final_params, tr.final_stats, adv.features, adv.labels);
  CHECK(attacked <= clean);
  CHECK_THROWS_AS(adversarial_examples(network, tr.final_params, tr.final_stats, q, -0.1), ConfigError);
}

TEST_CASE("dataset subset and head") {
  const auto [train, test] = synth_gaussian(small_spec(3.0, 11));
  const std::vector<std::size_t> rows{5, 0, 7};
  const Dataset s = train.subset(rows);
  CHECK(s.size() == 3);
  CHECK(s.labels[0] == train.labels[5]);
  CHECK(s.features(2, 3) == train.features(7, 3));
  CHECK(train.head(10).size() == 10);
  CHECK(train.head(10).image == train.image);
}
