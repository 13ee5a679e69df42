#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>

#include "minima/errors.hpp"
#include "minima/harness.hpp"
#include "minima/landscape.hpp"
#include "minima/parallel.hpp"
#include "minima/rng.hpp"

namespace minima::harness {
namespace {

std::uint64_t trial_seed(const ExperimentConfig& cfg, std::size_t trial) { return cfg.seed + trial; }

std::string eps_label(double eps) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "phi_%g", eps);
  return buf;
}

std::string count(std::size_t v) { return std::to_string(v); }

optim::TrainConfig fixed_epochs(optim::TrainConfig t, std::size_t epochs) {
  t.stop.rel_improvement_tol = 0.0;
  t.stop.max_epochs = epochs;
  return t;
}

double test_accuracy(const optim::TrainTrace& trace) {
  return trace.records.at(trace.best_epoch).test_accuracy;
}

sharpness::Report phi(const Workspace& ws, const ExperimentConfig& cfg, const net::ParamVector& x,
                      const net::RunningStats& stats, double eps, const sharpness::SubspaceSpec& subspace,
                      std::uint64_t restart_key) {
  sharpness::Options opt;
  opt.max_outer = cfg.sharpness.max_outer;
  opt.restarts = cfg.sharpness.restarts;
  opt.restart_seed = derive_seed(cfg.sharpness.restart_seed, {restart_key});
  const auto f = sharpness::network_objective(ws.network, stats, ws.train);
  return sharpness::sharpness(f, x.values, eps, subspace, opt);
}

sharpness::Report full_space_phi(const Workspace& ws, const ExperimentConfig& cfg, const net::ParamVector& x,
                                 const net::RunningStats& stats, double eps, std::uint64_t restart_key) {
  return phi(ws, cfg, x, stats, eps, sharpness::SubspaceSpec::full_space(), restart_key);
}

Solution solution_from(Regime regime, std::size_t trial, const net::ParamVector& init,
                       const optim::TrainTrace& trace) {
  Solution s;
  s.regime = regime;
  s.trial = trial;
  s.init = init;
  s.params = trace.final_params;
  s.stats = trace.final_stats;
  const auto& rec = trace.records.at(trace.best_epoch);
  s.train_acc = rec.train_accuracy;
  s.test_acc = rec.test_accuracy;
  s.final_loss = rec.train_loss;
  s.epochs = trace.epochs_run;
  return s;
}

void append_summary(Table& table, const std::string& key, std::size_t key_col,
                    const std::vector<std::vector<double>>& columns, std::size_t first_value_col,
                    std::size_t width) {
  std::vector<std::string> mean(width), sd(width);
  mean[key_col] = sd[key_col] = key;
  mean[key_col + 1] = "mean";
  sd[key_col + 1] = "std";
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const Summary s = summarize(columns[c]);
    mean[first_value_col + c] = fmt(s.mean);
    sd[first_value_col + c] = fmt(s.std);
  }
  table.rows.push_back(std::move(mean));
  table.rows.push_back(std::move(sd));
}

}  // namespace

// --- workspace -----------------------------------------------------------------

Workspace prepare(const ExperimentConfig& cfg) {
  data::Dataset train, test;
  if (cfg.data.kind == DataSource::Kind::Synthetic) {
    std::tie(train, test) = data::synth_gaussian(cfg.data.synthetic);
  } else {
    train = data::load_idx(cfg.data.train_images, cfg.data.train_labels, cfg.data.classes);
    test = data::load_idx(cfg.data.test_images, cfg.data.test_labels, cfg.data.classes);
    if (cfg.data.train_limit && *cfg.data.train_limit < train.size()) train = train.head(*cfg.data.train_limit);
    if (cfg.data.test_limit && *cfg.data.test_limit < test.size()) test = test.head(*cfg.data.test_limit);
  }
  net::NetworkSpec spec;
  if (cfg.network) {
    spec = *cfg.network;
  } else {
    spec = net::mlp(train.dim(), cfg.hidden, train.num_classes, cfg.batchnorm);
  }
  try {
    spec.validate();
  } catch (const SpecError& e) {
    throw ConfigError(std::string("network: ") + e.what());
  }
  if (spec.input_dim != train.dim())
    throw ConfigError("network input_dim " + count(spec.input_dim) + " does not match data dim " + count(train.dim()));
  if (spec.num_classes() != train.num_classes)
    throw ConfigError("network class count does not match the data");
  return {std::move(train), std::move(test), net::Network(std::move(spec))};
}

std::string_view regime_name(Regime r) { return r == Regime::Small ? "sb" : "lb"; }

std::size_t regime_batch(const ExperimentConfig& cfg, Regime r, std::size_t train_size) {
  const std::size_t b = r == Regime::Small
                            ? cfg.sb_batch
                            : static_cast<std::size_t>(std::ceil(cfg.lb_fraction * static_cast<double>(train_size)));
  if (b == 0 || b > train_size)
    throw ConfigError(std::string(regime_name(r)) + " batch size " + count(b) + " does not fit " + count(train_size) +
                      " training rows");
  return b;
}

optim::TrainConfig regime_train_config(const ExperimentConfig& cfg, Regime r, std::size_t train_size,
                                       std::size_t trial) {
  optim::TrainConfig t = cfg.train;
  t.batch_size = regime_batch(cfg, r, train_size);
  t.sampling = r == Regime::Small ? optim::SamplingStrategy::EpochShuffle
                                  : optim::SamplingStrategy::UniformWithoutReplacement;
  t.seed = trial_seed(cfg, trial);
  t.snapshots = false;
  return t;
}

// --- baseline ------------------------------------------------------------------

BaselineResult run_baseline(const Workspace& ws, const ExperimentConfig& cfg) {
  const std::size_t M = ws.train.size();
  for (Regime r : {Regime::Small, Regime::Large}) regime_batch(cfg, r, M);

  BaselineResult out;
  out.solutions.resize(cfg.trials * 2);
  parallel::for_each(cfg.trials * 2, [&](std::size_t task) {
    const std::size_t trial = task / 2;
    const Regime regime = task % 2 == 0 ? Regime::Small : Regime::Large;
    const net::ParamVector init = ws.network.init_params(trial_seed(cfg, trial));
    Solution& s = out.solutions[task];
    try {
      const auto trace = optim::train(ws.network, ws.train, &ws.test, regime_train_config(cfg, regime, M, trial),
                                      init, ws.network.initial_stats());
      s = solution_from(regime, trial, init, trace);
    } catch (const DivergedError&) {
      s.regime = regime;
      s.trial = trial;
      s.init = init;
      s.params = init;
      s.stats = ws.network.initial_stats();
      s.diverged = true;
    }
  });

  Table& t = out.table;
  t.header = {"regime", "trial", "train_acc", "test_acc", "final_loss", "epochs", "status"};
  for (const auto& s : out.solutions) {
    if (s.diverged)
      t.rows.push_back({std::string(regime_name(s.regime)), count(s.trial), "nan", "nan", "nan", "0", "diverged"});
    else
      t.rows.push_back({std::string(regime_name(s.regime)), count(s.trial), fmt(s.train_acc), fmt(s.test_acc),
                        fmt(s.final_loss), count(s.epochs), "ok"});
  }
  for (Regime r : {Regime::Small, Regime::Large}) {
    std::vector<std::vector<double>> cols(4);
    for (const auto& s : out.solutions) {
      if (s.regime != r || s.diverged) continue;
      cols[0].push_back(s.train_acc);
      cols[1].push_back(s.test_acc);
      cols[2].push_back(s.final_loss);
      cols[3].push_back(static_cast<double>(s.epochs));
    }
    append_summary(t, std::string(regime_name(r)), 0, cols, 2, t.header.size());
  }
  return out;
}

namespace {

std::string solution_path(const std::string& dir, std::string_view name, std::size_t trial, bool stats) {
  return (std::filesystem::path(dir) /
          (std::string(name) + "_trial" + std::to_string(trial) + (stats ? ".stats.mspv" : ".mspv")))
      .string();
}

}  // namespace

void save_solutions(const std::string& dir, const std::vector<Solution>& solutions) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw FileError("cannot create " + dir + ": " + ec.message());
  for (const auto& s : solutions) {
    if (s.diverged) continue;
    optim::save_vector(solution_path(dir, "init", s.trial, false), s.init.values);
    optim::save_vector(solution_path(dir, regime_name(s.regime), s.trial, false), s.params.values);
    optim::save_vector(solution_path(dir, regime_name(s.regime), s.trial, true), net::flatten_stats(s.stats));
  }
}

std::vector<Solution> load_solutions(const std::string& dir, const Workspace& ws, const ExperimentConfig& cfg) {
  std::vector<Solution> out;
  for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
    for (Regime r : {Regime::Small, Regime::Large}) {
      Solution s;
      s.regime = r;
      s.trial = trial;
      auto load = [&](const std::string& path) {
        if (!std::filesystem::exists(path)) throw FileError("missing snapshot " + path);
        auto v = optim::load_vector(path);
        return v;
      };
      auto init = load(solution_path(dir, "init", trial, false));
      auto params = load(solution_path(dir, regime_name(r), trial, false));
      if (init.size() != ws.network.num_params() || params.size() != ws.network.num_params())
        throw FileError("snapshot in " + dir + " does not match the configured network");
      s.init = ws.network.wrap(std::move(init));
      s.params = ws.network.wrap(std::move(params));
      s.stats = net::unflatten_stats(ws.network.spec(), load(solution_path(dir, regime_name(r), trial, true)));
      s.train_acc = ws.network.accuracy(s.params, s.stats, ws.train.features, ws.train.labels);
      s.test_acc = ws.network.accuracy(s.params, s.stats, ws.test.features, ws.test.labels);
      s.final_loss = ws.network.loss(s.params, s.stats, ws.train.features, ws.train.labels);
      out.push_back(std::move(s));
    }
  }
  return out;
}

// --- sharpness table -------------------------------------------------------------

Table run_sharpness_table(const Workspace& ws, const ExperimentConfig& cfg, const std::vector<Solution>& solutions) {
  const auto& sc = cfg.sharpness;
  std::vector<bool> kinds;  // false: full space, true: random subspace
  if (sc.full_space) kinds.push_back(false);
  if (sc.random_subspace) kinds.push_back(true);
  const std::size_t n = ws.network.num_params();
  const std::size_t p = std::min(sc.subspace_dim, n);

  struct Task {
    std::size_t solution;
    double eps;
    bool random;
  };
  std::vector<Task> tasks;
  for (std::size_t s = 0; s < solutions.size(); ++s) {
    if (solutions[s].diverged) continue;
    for (double eps : sc.epsilons)
      for (bool random : kinds) tasks.push_back({s, eps, random});
  }
  std::vector<sharpness::Report> reports(tasks.size());
  parallel::for_each(tasks.size(), [&](std::size_t i) {
    const Task& task = tasks[i];
    const Solution& s = solutions[task.solution];
    const sharpness::SubspaceSpec subspace = task.random
                                                 ? sharpness::SubspaceSpec::random(n, p, sc.subspace_seed + s.trial)
                                                 : sharpness::SubspaceSpec::full_space();
    reports[i] = phi(ws, cfg, s.params, s.stats, task.eps, subspace, s.trial * 2 + (s.regime == Regime::Large));
  });

  Table t;
  t.header = {"tag", "regime", "trial", "epsilon", "subspace", "p", "phi", "f_at_x", "inner_iters", "oracle_calls",
              "seed"};
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Solution& s = solutions[tasks[i].solution];
    const auto& r = reports[i];
    t.rows.push_back({"trial", std::string(regime_name(s.regime)), count(s.trial), fmt(r.epsilon),
                      tasks[i].random ? "random" : "full", count(r.p), fmt(r.phi), fmt(r.f_at_x),
                      count(r.diagnostics.iterations), count(r.diagnostics.oracle_calls),
                      tasks[i].random ? std::to_string(r.subspace_seed) : ""});
  }
  for (Regime regime : {Regime::Small, Regime::Large})
    for (double eps : sc.epsilons)
      for (bool random : kinds) {
        std::vector<double> values;
        for (std::size_t i = 0; i < tasks.size(); ++i)
          if (solutions[tasks[i].solution].regime == regime && tasks[i].eps == eps && tasks[i].random == random)
            values.push_back(reports[i].phi);
        const Summary sm = summarize(values);
        const std::string pp = random ? count(p) : count(n);
        for (const auto& [tag, v] : {std::pair{"mean", sm.mean}, std::pair{"std", sm.std}})
          t.rows.push_back({tag, std::string(regime_name(regime)), "all", fmt(eps), random ? "random" : "full", pp,
                            fmt(v), "", "", "", ""});
      }
  return t;
}

// --- slices ------------------------------------------------------------------------

SliceResult run_slice(const Workspace& ws, const ExperimentConfig& cfg, const std::vector<Solution>& solutions) {
  const Solution* sb = nullptr;
  const Solution* lb = nullptr;
  for (const auto& s : solutions)
    if (s.trial == 0 && !s.diverged) (s.regime == Regime::Small ? sb : lb) = &s;
  if (!sb || !lb) throw DivergedError("trial 0 has no usable SB/LB pair to slice between", {});

  const auto alphas = landscape::alpha_grid(cfg.slice.points, cfg.slice.lo, cfg.slice.hi);
  SliceResult out;
  out.slices.header = {"kind", "alpha", "train_loss", "test_loss", "train_acc", "test_acc"};
  auto emit = [&](const char* name, const std::vector<landscape::SlicePoint>& pts) {
    for (const auto& p : pts)
      out.slices.rows.push_back(
          {name, fmt(p.alpha), fmt(p.train_loss), fmt(p.test_loss), fmt(p.train_acc), fmt(p.test_acc)});
  };
  if (cfg.slice.linear)
    emit("linear", landscape::linear_slice(ws.network, sb->params, lb->params, ws.train, ws.test, alphas));
  if (cfg.slice.curvilinear)
    emit("curvilinear", landscape::curvilinear_slice(ws.network, sb->params, lb->params, ws.train, ws.test, alphas));

  out.distances.header = {"trial", "d_sb", "d_lb", "ratio"};
  std::map<std::size_t, std::pair<const Solution*, const Solution*>> pairs;
  for (const auto& s : solutions)
    if (!s.diverged) (s.regime == Regime::Small ? pairs[s.trial].first : pairs[s.trial].second) = &s;
  for (const auto& [trial, pr] : pairs) {
    if (!pr.first || !pr.second) continue;
    try {
      const auto d = landscape::distance_ratio(pr.first->init.values, pr.first->params.values, pr.second->params.values);
      out.distances.rows.push_back({count(trial), fmt(d.d_s), fmt(d.d_l), fmt(d.ratio)});
    } catch (const DegenerateError&) {
      out.distances.rows.push_back({count(trial), "nan", "0", "nan"});
    }
  }
  return out;
}

// --- batch sweep ---------------------------------------------------------------------

Table run_batch_sweep(const Workspace& ws, const ExperimentConfig& cfg) {
  const std::size_t M = ws.train.size();
  std::vector<std::size_t> sizes = cfg.sweep.batch_sizes;
  if (sizes.empty()) {
    const std::size_t lb = regime_batch(cfg, Regime::Large, M);
    for (std::size_t b = cfg.sb_batch; b < lb; b *= 2) sizes.push_back(b);
    sizes.push_back(lb);
  }
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
  for (std::size_t b : sizes)
    if (b > M) throw ConfigError("sweep batch size " + count(b) + " exceeds the training set");

  const auto& eps = cfg.sharpness.epsilons;
  struct Point {
    double test_acc = 0.0, loss = 0.0;
    std::vector<double> phi;
    bool diverged = false;
  };
  std::vector<Point> points(sizes.size());
  const net::ParamVector init = ws.network.init_params(trial_seed(cfg, 0));
  parallel::for_each(sizes.size(), [&](std::size_t i) {
    optim::TrainConfig t = fixed_epochs(cfg.train, cfg.sweep.epochs);
    t.batch_size = sizes[i];
    t.sampling = sizes[i] <= cfg.sb_batch ? optim::SamplingStrategy::EpochShuffle
                                          : optim::SamplingStrategy::UniformWithoutReplacement;
    t.seed = trial_seed(cfg, 0);
    try {
      const auto trace = optim::train(ws.network, ws.train, &ws.test, t, init, ws.network.initial_stats());
      points[i].test_acc = test_accuracy(trace);
      points[i].loss = trace.records.at(trace.best_epoch).train_loss;
      for (double e : eps)
        points[i].phi.push_back(full_space_phi(ws, cfg, trace.final_params, trace.final_stats, e, i).phi);
    } catch (const DivergedError&) {
      points[i].diverged = true;
    }
  });

  Table t;
  t.header = {"batch_size", "test_acc", "train_loss"};
  for (double e : eps) t.header.push_back(eps_label(e));
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    std::vector<std::string> row{count(sizes[i])};
    if (points[i].diverged) {
      row.resize(t.header.size(), "nan");
    } else {
      row.push_back(fmt(points[i].test_acc));
      row.push_back(fmt(points[i].loss));
      for (double v : points[i].phi) row.push_back(fmt(v));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

// --- piggyback -------------------------------------------------------------------------

Table run_piggyback(const Workspace& ws, const ExperimentConfig& cfg) {
  const std::size_t M = ws.train.size();
  const std::size_t E = cfg.piggyback.epochs;
  std::vector<std::size_t> warm;
  if (cfg.piggyback.warm_epochs) {
    warm = *cfg.piggyback.warm_epochs;
    std::sort(warm.begin(), warm.end());
    warm.erase(std::unique(warm.begin(), warm.end()), warm.end());
  } else {
    for (std::size_t w = 0; w <= E; ++w) warm.push_back(w);
  }

  struct SbRun {
    optim::TrainTrace trace;
    bool diverged = false;
  };
  std::vector<SbRun> sb(cfg.trials);
  parallel::for_each(cfg.trials, [&](std::size_t trial) {
    optim::TrainConfig t = fixed_epochs(regime_train_config(cfg, Regime::Small, M, trial), E);
    t.snapshots = true;
    try {
      sb[trial].trace = optim::train(ws.network, ws.train, &ws.test, t, ws.network.init_params(trial_seed(cfg, trial)),
                                     ws.network.initial_stats());
    } catch (const DivergedError&) {
      sb[trial].diverged = true;
    }
  });

  struct Row {
    double lb_test_acc = 0.0, lb_phi = 0.0;
    bool ok = false;
  };
  std::vector<Row> rows(cfg.trials * warm.size());
  parallel::for_each(rows.size(), [&](std::size_t i) {
    const std::size_t trial = i / warm.size();
    const std::size_t w = warm[i % warm.size()];
    if (sb[trial].diverged) return;
    const auto& snaps = sb[trial].trace.snapshots;
    // Early stopping is off, so every epoch up to E has a snapshot.
    const optim::Snapshot& start = snaps.at(w);
    const optim::TrainConfig t = fixed_epochs(regime_train_config(cfg, Regime::Large, M, trial), E);
    try {
      const auto trace = optim::train(ws.network, ws.train, &ws.test, t, start.params, start.stats);
      rows[i].lb_test_acc = test_accuracy(trace);
      rows[i].lb_phi =
          full_space_phi(ws, cfg, trace.final_params, trace.final_stats, cfg.sharpness.epsilons.front(), i).phi;
      rows[i].ok = true;
    } catch (const DivergedError&) {
    }
  });

  Table t;
  t.header = {"trial", "warm_epochs", "sb_test_acc", "lb_test_acc", "lb_phi"};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t trial = i / warm.size();
    const std::string sb_acc = sb[trial].diverged ? "nan" : fmt(test_accuracy(sb[trial].trace));
    if (rows[i].ok)
      t.rows.push_back({count(trial), count(warm[i % warm.size()]), sb_acc, fmt(rows[i].lb_test_acc),
                        fmt(rows[i].lb_phi)});
    else
      t.rows.push_back({count(trial), count(warm[i % warm.size()]), sb_acc, "nan", "nan"});
  }
  return t;
}

// --- trajectory -------------------------------------------------------------------------

Table run_trajectory(const Workspace& ws, const ExperimentConfig& cfg) {
  const std::size_t M = ws.train.size();
  const net::ParamVector init = ws.network.init_params(trial_seed(cfg, 0));
  std::vector<optim::TrainTrace> traces(2);
  std::vector<std::string> failure(2);
  parallel::for_each(2, [&](std::size_t r) {
    optim::TrainConfig t = regime_train_config(cfg, r == 0 ? Regime::Small : Regime::Large, M, 0);
    t.snapshots = true;
    try {
      traces[r] = optim::train(ws.network, ws.train, &ws.test, t, init, ws.network.initial_stats());
    } catch (const DivergedError& e) {
      failure[r] = e.what();
    }
  });
  for (const auto& f : failure)
    if (!f.empty()) throw DivergedError(f, {});

  struct Task {
    std::size_t regime, record;
  };
  std::vector<Task> tasks;
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t k = 0; k < traces[r].records.size(); ++k)
      if (k % cfg.trajectory.stride == 0 || k + 1 == traces[r].records.size()) tasks.push_back({r, k});
  std::vector<double> phis(tasks.size());
  parallel::for_each(tasks.size(), [&](std::size_t i) {
    const auto& snap = traces[tasks[i].regime].snapshots[tasks[i].record];
    phis[i] = full_space_phi(ws, cfg, snap.params, snap.stats, cfg.sharpness.epsilons.front(), 0).phi;
  });

  Table t;
  t.header = {"step", "regime", "full_train_loss", "phi"};
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& rec = traces[tasks[i].regime].records[tasks[i].record];
    t.rows.push_back({count(rec.epoch), tasks[i].regime == 0 ? "sb" : "lb", fmt(rec.train_loss), fmt(phis[i])});
  }
  return t;
}

// --- remedies ---------------------------------------------------------------------------

Table run_remedies(const Workspace& ws, const ExperimentConfig& cfg) {
  const std::size_t M = ws.train.size();
  std::vector<std::string> strategies{"sb", "lb"};
  for (const auto& s : cfg.remedies.strategies) strategies.push_back(s);
  const auto& eps = cfg.sharpness.epsilons;

  struct Result {
    double test_acc = 0.0;
    std::vector<double> phi;
    bool ok = false;
  };
  std::vector<Result> results(cfg.trials * strategies.size());
  parallel::for_each(results.size(), [&](std::size_t i) {
    const std::size_t trial = i / strategies.size();
    const std::string& name = strategies[i % strategies.size()];
    optim::TrainConfig t = regime_train_config(cfg, name == "sb" ? Regime::Small : Regime::Large, M, trial);
    if (name == "augment") {
      t.augment = cfg.remedies.augment;
      t.augment->seed = derive_seed(cfg.remedies.augment.seed, {trial});
    } else if (name == "conservative") {
      t.conservative = optim::ConservativeConfig{cfg.remedies.lambda, cfg.remedies.inner_iters};
    } else if (name == "adversarial") {
      t.adversarial_eta = cfg.remedies.eta;
    }
    try {
      const auto trace = optim::train(ws.network, ws.train, &ws.test, t,
                                      ws.network.init_params(trial_seed(cfg, trial)), ws.network.initial_stats());
      results[i].test_acc = test_accuracy(trace);
      for (std::size_t k = 0; k < eps.size(); ++k)
        results[i].phi.push_back(full_space_phi(ws, cfg, trace.final_params, trace.final_stats, eps[k], i).phi);
      results[i].ok = true;
    } catch (const DivergedError&) {
    }
  });

  Table t;
  t.header = {"strategy", "trial", "test_acc"};
  for (double e : eps) t.header.push_back(eps_label(e));
  for (std::size_t i = 0; i < results.size(); ++i) {
    std::vector<std::string> row{strategies[i % strategies.size()], count(i / strategies.size())};
    if (!results[i].ok) {
      row.resize(t.header.size(), "nan");
    } else {
      row.push_back(fmt(results[i].test_acc));
      for (double v : results[i].phi) row.push_back(fmt(v));
    }
    t.rows.push_back(std::move(row));
  }
  for (std::size_t s = 0; s < strategies.size(); ++s) {
    std::vector<std::vector<double>> cols(1 + eps.size());
    for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
      const Result& r = results[trial * strategies.size() + s];
      if (!r.ok) continue;
      cols[0].push_back(r.test_acc);
      for (std::size_t k = 0; k < eps.size(); ++k) cols[1 + k].push_back(r.phi[k]);
    }
    append_summary(t, strategies[s], 0, cols, 2, t.header.size());
  }
  return t;
}

// --- performance model -------------------------------------------------------------------

PerfBound perf_speedup_bound(const PerfModelInputs& in) {
  if (!(in.efficiency_small > 0.0)) throw DomainError("parallel efficiency f_s must be positive");
  if (in.efficiency_small > 1.0) throw DomainError("parallel efficiency f_s must not exceed 1");
  if (!(in.batch_small > 0.0) || !(in.batch_large > 0.0)) throw DomainError("batch sizes must be positive");
  if (!(in.iters_small > 0.0) || !(in.iters_large >= 0.0)) throw DomainError("iteration counts must be positive");
  if (!(in.processors >= 1.0)) throw DomainError("processor count must be at least 1");
  if (!(in.processors < in.batch_large)) throw DomainError("the model assumes P < B_l");
  PerfBound b;
  b.bound = in.batch_small / (in.efficiency_small * in.batch_large);
  b.ratio = in.iters_large / in.iters_small;
  b.lb_faster = b.ratio < b.bound;
  return b;
}

Table run_perfmodel(const ExperimentConfig& cfg) {
  const PerfModelInputs& in = cfg.perf;
  const PerfBound b = perf_speedup_bound(in);
  Table t;
  t.header = {"I_s", "I_l", "B_s", "B_l", "P", "f_s", "bound", "ratio", "lb_faster"};
  t.rows.push_back({fmt(in.iters_small), fmt(in.iters_large), fmt(in.batch_small), fmt(in.batch_large),
                    fmt(in.processors), fmt(in.efficiency_small), fmt(b.bound), fmt(b.ratio),
                    b.lb_faster ? "true" : "false"});
  return t;
}

}  // namespace minima::harness
