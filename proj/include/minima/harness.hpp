#pragma once
// Config-driven experiments: SB/LB baselines, sharpness tables, slices, batch
// sweeps, warm starts, sharpness trajectories, remedies and the speed-up
// bound of the data-parallel cost model. Every experiment returns a Table;
// tables are written as CSV with a leading comment line.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "minima/data.hpp"
#include "minima/net.hpp"
#include "minima/optim.hpp"
#include "minima/sharpness.hpp"

namespace minima::harness {

inline constexpr std::string_view kVersion = "0.3.1";

struct DataSource {
  enum class Kind { Synthetic, Idx };
  Kind kind = Kind::Synthetic;
  data::SyntheticSpec synthetic{
      .test_size = 5000, .separation = 5.0, .modes_per_class = 2, .image = data::ImageShape{6, 10}};
  std::string train_images, train_labels, test_images, test_labels;
  std::optional<std::size_t> train_limit, test_limit;
  std::size_t classes = 10;
};

struct SharpnessSettings {
  std::vector<double> epsilons{1e-3, 5e-4};
  bool full_space = true;
  bool random_subspace = true;
  std::size_t subspace_dim = 100;
  std::uint64_t subspace_seed = 7;
  std::size_t max_outer = 10;
  std::size_t restarts = 0;
  std::uint64_t restart_seed = 0;
};

struct SliceSettings {
  std::size_t points = 61;
  double lo = -1.0;
  double hi = 2.0;
  bool linear = true;
  bool curvilinear = true;
};

struct SweepSettings {
  std::vector<std::size_t> batch_sizes;  // empty: doubling from SB to LB
  std::size_t epochs = 100;
};

struct PiggybackSettings {
  std::size_t epochs = 30;
  std::optional<std::vector<std::size_t>> warm_epochs;  // default 0..epochs
};

struct TrajectorySettings {
  std::size_t stride = 1;
};

struct RemedySettings {
  std::vector<std::string> strategies{"augment", "conservative", "adversarial"};
  double lambda = 1e-3;
  std::size_t inner_iters = 3;
  double eta = 0.1;
  data::AugmentPolicy augment;
};

struct PerfModelInputs {
  double iters_small = 1.0;
  double iters_large = 1.0;
  double batch_small = 256.0;
  double batch_large = 2560.0;
  double processors = 1.0;
  double efficiency_small = 1.0;
};

struct ExperimentConfig {
  std::optional<net::NetworkSpec> network;  // unset: hidden/batchnorm below
  std::vector<std::size_t> hidden{64, 64};
  bool batchnorm = true;
  DataSource data;
  std::size_t sb_batch = 256;
  double lb_fraction = 0.1;
  optim::TrainConfig train;  // optimizer and stop rule; batch settings come from the regimes
  std::size_t trials = 5;
  std::uint64_t seed = 0;
  SharpnessSettings sharpness;
  SliceSettings slice;
  SweepSettings sweep;
  PiggybackSettings piggyback;
  TrajectorySettings trajectory;
  RemedySettings remedies;
  PerfModelInputs perf;
  std::string solutions_dir;
  /// Canonical JSON the config was parsed from (hashed into CSV headers).
  nlohmann::json source = nlohmann::json::object();
};

/// Strict: unknown keys and out-of-range values raise ConfigError.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

/// FNV-1a of the canonical config JSON.
std::uint64_t config_hash(const ExperimentConfig& cfg);

// --- tables --------------------------------------------------------------------

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Shortest-round-trip-safe decimal ("%.17g").
std::string fmt(double v);
std::string to_csv(const Table& table, const ExperimentConfig& cfg);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};
Summary summarize(const std::vector<double>& values);

// --- workspace -----------------------------------------------------------------

struct Workspace {
  data::Dataset train;
  data::Dataset test;
  net::Network network;
};

Workspace prepare(const ExperimentConfig& cfg);

enum class Regime { Small, Large };
std::string_view regime_name(Regime r);
std::size_t regime_batch(const ExperimentConfig& cfg, Regime r, std::size_t train_size);
optim::TrainConfig regime_train_config(const ExperimentConfig& cfg, Regime r, std::size_t train_size,
                                       std::size_t trial);

struct Solution {
  Regime regime = Regime::Small;
  std::size_t trial = 0;
  net::ParamVector init;
  net::ParamVector params;
  net::RunningStats stats;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double final_loss = 0.0;
  std::size_t epochs = 0;
  bool diverged = false;
};

struct BaselineResult {
  Table table;
  std::vector<Solution> solutions;  // ordered by (trial, regime)
};

BaselineResult run_baseline(const Workspace& ws, const ExperimentConfig& cfg);

/// <dir>/{init,sb,lb}_trial<k>.mspv plus <regime>_trial<k>.stats.mspv.
void save_solutions(const std::string& dir, const std::vector<Solution>& solutions);
std::vector<Solution> load_solutions(const std::string& dir, const Workspace& ws, const ExperimentConfig& cfg);

Table run_sharpness_table(const Workspace& ws, const ExperimentConfig& cfg, const std::vector<Solution>& solutions);

struct SliceResult {
  Table slices;
  Table distances;
};
/// Slices between the SB and LB solutions of trial 0; distances for every trial.
SliceResult run_slice(const Workspace& ws, const ExperimentConfig& cfg, const std::vector<Solution>& solutions);

Table run_batch_sweep(const Workspace& ws, const ExperimentConfig& cfg);
Table run_piggyback(const Workspace& ws, const ExperimentConfig& cfg);
Table run_trajectory(const Workspace& ws, const ExperimentConfig& cfg);
Table run_remedies(const Workspace& ws, const ExperimentConfig& cfg);

struct PerfBound {
  double bound = 0.0;  // largest admissible I_l / I_s
  double ratio = 0.0;  // supplied I_l / I_s
  bool lb_faster = false;
};

/// LB wins iff I_l B_l / P < I_s B_s / (P f_s), i.e. I_l / I_s < B_s / (f_s B_l).
PerfBound perf_speedup_bound(const PerfModelInputs& in);
Table run_perfmodel(const ExperimentConfig& cfg);

// --- plots ---------------------------------------------------------------------

struct PlotSpec {
  std::string title{};
  std::string x{};
  std::vector<std::string> left{};
  std::vector<std::string> right{};
  std::string group{};  // one line per distinct value; may be empty
  std::optional<std::pair<std::string, std::string>> filter{};  // keep rows where column == value
  bool log_x = false;
};

/// 800x500 dual-axis line chart; a pure function of the CSV text.
std::string render_svg(std::string_view csv, const PlotSpec& spec);

}  // namespace minima::harness
