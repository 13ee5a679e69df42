#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>
#include <stdexcept>

#include "minima/errors.hpp"
#include "minima/harness.hpp"
#include "minima/parallel.hpp"

using namespace minima;
using namespace minima::harness;
using json = nlohmann::json;

namespace {

// Tiny problem: every experiment finishes in well under a second.
json tiny() {
  return json::parse(R"({
    "data": {"kind": "synthetic", "train_size": 120, "test_size": 90, "dim": 8, "classes": 3,
             "separation": 4.0, "seed": 2, "image": [2, 4]},
    "network": {"hidden": [6], "batchnorm": true},
    "regimes": {"sb_batch": 12, "lb_fraction": 0.25},
    "stop": {"rel_improvement_tol": 0, "max_epochs": 3},
    "trials": 2,
    "seed": 5,
    "sharpness": {"epsilons": [1e-3], "subspace_dim": 4, "max_outer": 2}
  })");
}

std::vector<std::string> without_first(std::vector<std::string> row) {
  row.erase(row.begin());
  return row;
}

const std::vector<std::string>& row_where(const Table& t, std::size_t col, const std::string& v, std::size_t col2,
                                          const std::string& v2) {
  for (const auto& r : t.rows)
    if (r[col] == v && r[col2] == v2) return r;
  throw std::runtime_error("row not found: " + v + " " + v2);
}

}  // namespace

TEST_CASE("config defaults") {
  const ExperimentConfig c = parse_config(json::object());
  CHECK(c.sb_batch == 256);
  CHECK(c.lb_fraction == 0.1);
  CHECK(c.trials == 5);
  CHECK(c.train.stop.rel_improvement_tol == 1e-4);
  CHECK(c.train.stop.patience_epochs == 10);
  CHECK(c.train.stop.max_epochs == 200);
  CHECK(c.train.adam.learning_rate == 1e-3);
  CHECK(c.sharpness.epsilons == std::vector<double>{1e-3, 5e-4});
  CHECK(c.sharpness.subspace_dim == 100);
  CHECK(c.slice.points == 61);
  CHECK(c.slice.lo == -1.0);
  CHECK(c.slice.hi == 2.0);
  CHECK(c.piggyback.epochs == 30);
}

TEST_CASE("config parsing is strict") {
  const char* bad[] = {
      R"({"bogus": 1})",
      R"({"data": {"kind": "synthetic", "colour": 3}})",
      R"({"data": {"kind": "tfrecord"}})",
      R"({"data": {"kind": "idx", "train_images": "a"}})",
      R"({"regimes": {"lb_fraction": 0}})",
      R"({"regimes": {"lb_fraction": 1.5}})",
      R"({"regimes": {"sb_batch": 0}})",
      R"({"trials": 0})",
      R"({"trials": "five"})",
      R"({"optimizer": {"kind": "adam", "learning_rate": -1}})",
      R"({"optimizer": {"kind": "rmsprop"}})",
      R"({"stop": {"max_epochs": 0}})",
      R"({"sharpness": {"epsilons": []}})",
      R"({"sharpness": {"epsilons": [0]}})",
      R"({"sharpness": {"subspaces": ["diagonal"]}})",
      R"({"slice": {"range": [2, -1]}})",
      R"({"slice": {"kinds": ["radial"]}})",
      R"({"piggyback": {"epochs": 3, "warm_epochs": [4]}})",
      R"({"remedies": {"strategies": ["dropout"]}})",
      R"({"remedies": {"eta": -0.1}})",
      R"({"remedies": {"augment": {"max_rotation_degrees": -5}}})",
      R"({"perfmodel": {"Q": 1}})",
      R"({"network": {"hidden": [4], "dropout": 0.5}})",
      R"({"network": {"input_dim": 4, "layers": [{"kind": "dense", "in": 3, "out": 2}]}})",
      R"([1, 2])",
  };
  for (const char* text : bad) {
    CAPTURE(text);
    CHECK_THROWS_AS(parse_config(json::parse(text)), ConfigError);
  }
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("config hash") {
  const auto a = parse_config(tiny());
  const auto b = parse_config(tiny());
  CHECK(config_hash(a) == config_hash(b));
  json j = tiny();
  j["seed"] = 6;
  CHECK(config_hash(parse_config(j)) != config_hash(a));
  // Where solutions live does not change the experiment.
  j = tiny();
  j["solutions_dir"] = "/tmp/elsewhere";
  CHECK(config_hash(parse_config(j)) == config_hash(a));
}

TEST_CASE("CSV format") {
  const auto cfg = parse_config(tiny());
  Table t{{"a", "b"}, {{"1", "x"}, {"2", "y"}}};
  const std::string csv = to_csv(t, cfg);
  const std::string first = csv.substr(0, csv.find('\n'));
  CHECK(first.rfind("# minima ", 0) == 0);
  CHECK(first.find("config=") != std::string::npos);
  CHECK(first.find("seed=5") != std::string::npos);
  CHECK(csv.substr(first.size() + 1) == "a,b\n1,x\n2,y\n");
  CHECK(fmt(0.1) == "0.10000000000000001");
  CHECK(std::stod(fmt(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(fmt(std::nan("")) == "nan");
}

TEST_CASE("summarize") {
  const Summary s = summarize({1.0, 2.0, 3.0, 4.0});
  CHECK(s.mean == 2.5);
  CHECK(s.std == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-15));
  CHECK(summarize({7.0}).std == 0.0);
  CHECK(summarize({7.0}).mean == 7.0);
  CHECK(summarize({}).mean == 0.0);
}

TEST_CASE("speed-up bound of the cost model") {
  PerfModelInputs in{1000, 400, 256, 2560, 64, 0.2};
  PerfBound b = perf_speedup_bound(in);
  CHECK(b.bound == 0.5);
  CHECK(b.ratio == 0.4);
  CHECK(b.lb_faster);

  in = {10, 10, 100, 100, 4, 1.0};
  CHECK(perf_speedup_bound(in).bound == 1.0);
  CHECK_FALSE(perf_speedup_bound(in).lb_faster);  // equality is not faster

  in = {10, 5, 1, 10, 2, 0.2};
  CHECK(perf_speedup_bound(in).bound == 0.5);
  CHECK_FALSE(perf_speedup_bound(in).lb_faster);

  for (double fs : {0.0, -0.1, 1.5, std::nan("")}) {
    in = {10, 5, 1, 10, 2, fs};
    CHECK_THROWS_AS(perf_speedup_bound(in), DomainError);
  }
  in = {10, 5, 1, 10, 10, 0.5};
  CHECK_THROWS_AS(perf_speedup_bound(in), DomainError);
  in = {0, 5, 1, 10, 2, 0.5};
  CHECK_THROWS_AS(perf_speedup_bound(in), DomainError);
}

TEST_CASE("workspace and regimes") {
  auto cfg = parse_config(tiny());
  const Workspace ws = prepare(cfg);
  CHECK(ws.train.size() == 120);
  CHECK(ws.test.size() == 90);
  CHECK(regime_batch(cfg, Regime::Small, 120) == 12);
  CHECK(regime_batch(cfg, Regime::Large, 120) == 30);
  CHECK(regime_batch(cfg, Regime::Large, 121) == 31);
  cfg.sb_batch = 500;
  CHECK_THROWS_AS(regime_batch(cfg, Regime::Small, 120), ConfigError);

  json j = tiny();
  j["network"] = json::parse(R"({"input_dim": 5, "layers": [{"kind": "dense", "in": 5, "out": 3},
                                 {"kind": "softmax_ce", "classes": 3}]})");
  CHECK_THROWS_AS(prepare(parse_config(j)), ConfigError);
}

TEST_CASE("baseline with one full batch gives identical SB and LB runs") {
  json j = tiny();
  j["regimes"] = {{"sb_batch", 120}, {"lb_fraction", 1.0}};
  j["trials"] = 1;
  const auto cfg = parse_config(j);
  const auto res = run_baseline(prepare(cfg), cfg);
  REQUIRE(res.table.rows.size() == 2 + 4);
  CHECK(res.table.rows[0][0] == "sb");
  CHECK(res.table.rows[1][0] == "lb");
  CHECK(without_first(res.table.rows[0]) == without_first(res.table.rows[1]));
  CHECK(res.solutions[0].params.values == res.solutions[1].params.values);
  CHECK(res.table.rows[2][1] == "mean");
  CHECK(res.table.rows[3][1] == "std");
  CHECK(res.table.rows[3][2] == "0");
}

TEST_CASE("baseline solutions round trip through snapshot files") {
  const auto cfg = parse_config(tiny());
  const Workspace ws = prepare(cfg);
  const auto res = run_baseline(ws, cfg);
  CHECK(res.solutions.size() == 4);
  const std::string dir = (std::filesystem::temp_directory_path() / "minima_harness_solutions").string();
  save_solutions(dir, res.solutions);
  const auto back = load_solutions(dir, ws, cfg);
  REQUIRE(back.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(back[i].params.values == res.solutions[i].params.values);
    CHECK(back[i].init.values == res.solutions[i].init.values);
    CHECK(back[i].stats == res.solutions[i].stats);
  }
  // Same init for SB and LB within a trial, different across trials.
  CHECK(res.solutions[0].init.values == res.solutions[1].init.values);
  CHECK(res.solutions[0].init.values != res.solutions[2].init.values);

  const Table sharp = run_sharpness_table(ws, cfg, back);
  CHECK(sharp.rows.size() == 4 * 2 + 2 * 2 * 2);
  for (const auto& r : sharp.rows)
    if (r[0] == "trial") CHECK(std::stod(r[6]) >= 0.0);

  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_solutions(dir, ws, cfg), FileError);
}

TEST_CASE("slice and distance tables") {
  json j = tiny();
  j["slice"] = {{"points", 4}};
  const auto cfg = parse_config(j);
  const Workspace ws = prepare(cfg);
  const auto res = run_slice(ws, cfg, run_baseline(ws, cfg).solutions);
  CHECK(res.slices.rows.size() == 8);
  CHECK(res.slices.rows[0][1] == "-1");
  CHECK(res.slices.rows[3][1] == "2");
  CHECK(res.distances.rows.size() == 2);
}

TEST_CASE("sweep sizes are sorted and deduplicated") {
  json j = tiny();
  j["sweep"] = {{"batch_sizes", {60, 12, 30, 12}}, {"epochs", 1}};
  const auto cfg = parse_config(j);
  const Table t = run_batch_sweep(prepare(cfg), cfg);
  REQUIRE(t.rows.size() == 3);
  CHECK(t.rows[0][0] == "12");
  CHECK(t.rows[1][0] == "30");
  CHECK(t.rows[2][0] == "60");
  CHECK(t.header == std::vector<std::string>{"batch_size", "test_acc", "train_loss", "phi_0.001"});

  j["sweep"] = {{"batch_sizes", {500}}, {"epochs", 1}};
  const auto bad = parse_config(j);
  CHECK_THROWS_AS(run_batch_sweep(prepare(bad), bad), ConfigError);
}

TEST_CASE("piggyback rows; zero warm epochs is LB from scratch") {
  json j = tiny();
  j["piggyback"] = {{"epochs", 2}};
  j["stop"] = {{"rel_improvement_tol", 0}, {"max_epochs", 2}};
  const auto cfg = parse_config(j);
  const Workspace ws = prepare(cfg);
  const Table t = run_piggyback(ws, cfg);
  REQUIRE(t.rows.size() == 2 * 3);
  const auto base = run_baseline(ws, cfg).table;
  for (const char* trial : {"0", "1"}) {
    const auto& warm0 = row_where(t, 0, trial, 1, "0");
    const auto& lb = row_where(base, 0, "lb", 1, trial);
    const auto& sb = row_where(base, 0, "sb", 1, trial);
    CHECK(warm0[3] == lb[3]);
    CHECK(warm0[2] == sb[3]);
  }
}

TEST_CASE("trajectory starts from one shared point") {
  const auto cfg = parse_config(tiny());
  const Table t = run_trajectory(prepare(cfg), cfg);
  const auto& sb = row_where(t, 0, "0", 1, "sb");
  const auto& lb = row_where(t, 0, "0", 1, "lb");
  CHECK(sb[2] == lb[2]);
  CHECK(sb[3] == lb[3]);
  CHECK(t.rows.size() == 8);
}

TEST_CASE("remedies: zero-strength adversarial training is plain LB") {
  json j = tiny();
  j["remedies"] = {{"strategies", {"adversarial"}}, {"eta", 0.0}};
  const auto cfg = parse_config(j);
  const Table t = run_remedies(prepare(cfg), cfg);
  for (const char* trial : {"0", "1"})
    CHECK(without_first(row_where(t, 0, "lb", 1, trial)) == without_first(row_where(t, 0, "adversarial", 1, trial)));
  CHECK(t.rows.size() == 3 * 2 + 3 * 2);
}

TEST_CASE("remedies: all strategies run") {
  json j = tiny();
  j["trials"] = 1;
  const auto cfg = parse_config(j);
  const Table t = run_remedies(prepare(cfg), cfg);
  std::set<std::string> names;
  for (const auto& r : t.rows) names.insert(r[0]);
  CHECK(names == std::set<std::string>{"sb", "lb", "augment", "conservative", "adversarial"});
}

TEST_CASE("CSV output does not depend on the thread count") {
  const auto cfg = parse_config(tiny());
  const Workspace ws = prepare(cfg);
  std::vector<std::string> out;
  for (std::size_t threads : {1, 4}) {
    parallel::set_threads(threads);
    const auto base = run_baseline(ws, cfg);
    out.push_back(to_csv(base.table, cfg) + to_csv(run_sharpness_table(ws, cfg, base.solutions), cfg));
  }
  parallel::set_threads(1);
  CHECK(out[0] == out[1]);
}

TEST_CASE("SVG rendering is a pure function of the CSV") {
  const std::string csv = "# comment\nx,y,z,g\n1,2,3,a\n2,4,1,a\n1,1,1,b\n";
  const PlotSpec spec{.title = "t<1>", .x = "x", .left = {"y"}, .right = {"z"}, .group = "g"};
  const std::string a = render_svg(csv, spec);
  CHECK(a == render_svg(csv, spec));
  CHECK(a.rfind("<svg", 0) == 0);
  CHECK(a.find("t&lt;1&gt;") != std::string::npos);
  std::size_t lines = 0;
  for (std::size_t p = a.find("<polyline"); p != std::string::npos; p = a.find("<polyline", p + 1)) ++lines;
  CHECK(lines == 4);  // a y, b y, a z, b z
  CHECK_THROWS_AS(render_svg(csv, PlotSpec{.x = "w", .left = {"y"}}), ConfigError);
  const PlotSpec filtered{.x = "x", .left = {"y"}, .filter = std::pair<std::string, std::string>{"g", "b"}};
  CHECK(render_svg(csv, filtered).find("<polyline") != std::string::npos);
}
