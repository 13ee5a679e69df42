// minima: command-line front end for the experiment drivers.
//
//   minima <subcommand> [--config cfg.json] [--seed N] [--out-dir DIR] [--threads N] [--svg]
//
// Exit status: 0 success, 1 configuration error, 2 runtime or numeric error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "minima/errors.hpp"
#include "minima/harness.hpp"
#include "minima/parallel.hpp"

namespace fs = std::filesystem;
using namespace minima;
using namespace minima::harness;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::size_t threads = 1;
  bool svg = false;
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write " + path.string());
  out << text;
  if (!out) throw FileError("short write to " + path.string());
}

class Runner {
 public:
  explicit Runner(const Options& opt) : opt_(opt) {
    cfg_ = opt.config.empty() ? parse_config(nlohmann::json::object()) : load_config(opt.config);
    if (opt.seed) cfg_.seed = *opt.seed;
    if (opt.threads == 0) throw ConfigError("--threads must be at least 1");
    parallel::set_threads(opt.threads);
    std::error_code ec;
    fs::create_directories(opt.out_dir, ec);
    if (ec) throw FileError("cannot create " + opt.out_dir + ": " + ec.message());
  }

  const ExperimentConfig& cfg() const { return cfg_; }

  const Workspace& workspace() {
    if (!ws_) ws_.emplace(prepare(cfg_));
    return *ws_;
  }

  std::string emit(const std::string& name, const Table& table) {
    const std::string csv = to_csv(table, cfg_);
    write_file(fs::path(opt_.out_dir) / (name + ".csv"), csv);
    std::cout << (fs::path(opt_.out_dir) / (name + ".csv")).string() << "\n";
    return csv;
  }

  void plot(const std::string& name, const std::string& csv, const PlotSpec& spec) {
    if (!opt_.svg) return;
    write_file(fs::path(opt_.out_dir) / (name + ".svg"), render_svg(csv, spec));
    std::cout << (fs::path(opt_.out_dir) / (name + ".svg")).string() << "\n";
  }

  std::string solutions_dir() const {
    return cfg_.solutions_dir.empty() ? (fs::path(opt_.out_dir) / "solutions").string() : cfg_.solutions_dir;
  }

  std::vector<Solution> solutions_or_train() {
    if (!cfg_.solutions_dir.empty()) return load_solutions(cfg_.solutions_dir, workspace(), cfg_);
    return run_baseline(workspace(), cfg_).solutions;
  }

 private:
  const Options& opt_;
  ExperimentConfig cfg_;
  std::optional<Workspace> ws_;
};

std::vector<std::string> phi_columns(const ExperimentConfig& cfg) {
  std::vector<std::string> cols;
  for (double e : cfg.sharpness.epsilons) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "phi_%g", e);
    cols.emplace_back(buf);
  }
  return cols;
}

void run(const std::string& command, const Options& opt) {
  Runner r(opt);
  if (command == "train") {
    const auto res = run_baseline(r.workspace(), r.cfg());
    r.emit("baseline", res.table);
    save_solutions(r.solutions_dir(), res.solutions);
  } else if (command == "sharpness") {
    const auto solutions = load_solutions(r.solutions_dir(), r.workspace(), r.cfg());
    r.emit("sharpness", run_sharpness_table(r.workspace(), r.cfg(), solutions));
  } else if (command == "slice") {
    const auto res = run_slice(r.workspace(), r.cfg(), r.solutions_or_train());
    const std::string csv = r.emit("slice", res.slices);
    r.emit("distances", res.distances);
    for (const char* kind : {"linear", "curvilinear"})
      r.plot(std::string("slice_") + kind, csv,
             {.title = std::string(kind) + " slice from SB (0) to LB (1)",
              .x = "alpha",
              .left = {"train_loss", "test_loss"},
              .right = {"train_acc", "test_acc"},
              .filter = std::pair<std::string, std::string>{"kind", kind}});
  } else if (command == "sweep") {
    const std::string csv = r.emit("sweep", run_batch_sweep(r.workspace(), r.cfg()));
    r.plot("sweep", csv,
           {.title = "test accuracy and sharpness vs batch size",
            .x = "batch_size",
            .left = {"test_acc"},
            .right = phi_columns(r.cfg()),
            .log_x = true});
  } else if (command == "piggyback") {
    const std::string csv = r.emit("piggyback", run_piggyback(r.workspace(), r.cfg()));
    r.plot("piggyback", csv,
           {.title = "LB warm-started from SB snapshots",
            .x = "warm_epochs",
            .left = {"sb_test_acc", "lb_test_acc"},
            .right = {"lb_phi"},
            .filter = std::pair<std::string, std::string>{"trial", "0"}});
  } else if (command == "trajectory") {
    const std::string csv = r.emit("trajectory", run_trajectory(r.workspace(), r.cfg()));
    r.plot("trajectory", csv,
           {.title = "sharpness vs training loss", .x = "full_train_loss", .left = {"phi"}, .group = "regime"});
  } else if (command == "remedies") {
    r.emit("remedies", run_remedies(r.workspace(), r.cfg()));
  } else if (command == "perfmodel") {
    r.emit("perfmodel", run_perfmodel(r.cfg()));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Small-batch vs large-batch training and sharpness experiments"};
  app.require_subcommand(1);
  Options opt;
  const std::pair<const char*, const char*> commands[] = {
      {"train", "SB and LB training for every trial; writes baseline.csv and solution snapshots"},
      {"sharpness", "sharpness table for saved solutions"},
      {"slice", "linear and curvilinear slices between SB and LB solutions"},
      {"sweep", "test accuracy and sharpness across batch sizes"},
      {"piggyback", "LB runs warm-started from SB snapshots"},
      {"trajectory", "sharpness along SB and LB training"},
      {"remedies", "augmentation, conservative and adversarial LB training"},
      {"perfmodel", "iteration bound for LB to beat SB in the data-parallel cost model"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config, "experiment config (JSON)");
    sub->add_option("--seed", opt.seed, "base seed; overrides the config");
    sub->add_option("--out-dir", opt.out_dir, "output directory")->capture_default_str();
    sub->add_option("--threads", opt.threads, "worker threads")->capture_default_str();
    sub->add_flag("--svg", opt.svg, "also write SVG plots");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    run(command, opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
