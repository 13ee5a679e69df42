#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "minima/errors.hpp"
#include "minima/harness.hpp"
#include "minima/net_json.hpp"

namespace minima::harness {
namespace {

using nlohmann::json;

// Reads keys out of one JSON object and complains about anything left over.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be a JSON object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& at(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <class T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key " + where_ + "." + it.key());
  }

  const std::string& where() const { return where_; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

void parse_data(const json& j, DataSource& d) {
  Fields f(j, "data");
  std::string kind = "synthetic";
  f.get("kind", kind);
  if (kind == "synthetic") {
    d.kind = DataSource::Kind::Synthetic;
    auto& s = d.synthetic;
    f.get("train_size", s.train_size);
    f.get("test_size", s.test_size);
    f.get("dim", s.dim);
    f.get("classes", s.classes);
    f.get("separation", s.separation);
    f.get("modes_per_class", s.modes_per_class);
    f.get("seed", s.seed);
    if (f.has("image")) {
      const json& im = f.at("image");
      if (im.is_null()) {
        s.image.reset();
      } else {
        require(im.is_array() && im.size() == 2, "data.image must be [height, width] or null");
        s.image = data::ImageShape{im[0].get<std::size_t>(), im[1].get<std::size_t>()};
      }
    } else if (s.image && s.image->height * s.image->width != s.dim) {
      s.image.reset();
    }
    d.classes = s.classes;
  } else if (kind == "idx") {
    d.kind = DataSource::Kind::Idx;
    f.get("train_images", d.train_images);
    f.get("train_labels", d.train_labels);
    f.get("test_images", d.test_images);
    f.get("test_labels", d.test_labels);
    f.get("classes", d.classes);
    if (f.has("train_limit")) d.train_limit = f.at("train_limit").get<std::size_t>();
    if (f.has("test_limit")) d.test_limit = f.at("test_limit").get<std::size_t>();
    require(!d.train_images.empty() && !d.train_labels.empty() && !d.test_images.empty() &&
                !d.test_labels.empty(),
            "idx data needs train_images, train_labels, test_images and test_labels");
  } else {
    throw ConfigError("data.kind must be \"synthetic\" or \"idx\"");
  }
  f.finish();
}

void parse_network(const json& j, ExperimentConfig& cfg) {
  if (j.contains("layers")) {
    try {
      cfg.network = net::spec_from_json(j);
    } catch (const SpecError& e) {
      throw ConfigError(std::string("network: ") + e.what());
    }
    return;
  }
  Fields f(j, "network");
  f.get("hidden", cfg.hidden);
  f.get("batchnorm", cfg.batchnorm);
  f.finish();
}

void parse_optimizer(const json& j, optim::TrainConfig& t) {
  Fields f(j, "optimizer");
  std::string kind = "adam";
  f.get("kind", kind);
  if (kind == "adam") {
    t.optimizer = optim::OptimizerKind::Adam;
    f.get("learning_rate", t.adam.learning_rate);
    f.get("beta1", t.adam.beta1);
    f.get("beta2", t.adam.beta2);
    f.get("epsilon", t.adam.epsilon);
    require(t.adam.learning_rate > 0.0, "optimizer.learning_rate must be positive");
    require(t.adam.beta1 >= 0.0 && t.adam.beta1 < 1.0 && t.adam.beta2 >= 0.0 && t.adam.beta2 < 1.0,
            "optimizer betas must lie in [0, 1)");
    require(t.adam.epsilon > 0.0, "optimizer.epsilon must be positive");
  } else if (kind == "sgd") {
    t.optimizer = optim::OptimizerKind::Sgd;
    f.get("learning_rate", t.sgd_learning_rate);
    require(t.sgd_learning_rate > 0.0, "optimizer.learning_rate must be positive");
  } else {
    throw ConfigError("optimizer.kind must be \"adam\" or \"sgd\"");
  }
  f.finish();
}

void parse_stop(const json& j, optim::StopRule& s) {
  Fields f(j, "stop");
  f.get("rel_improvement_tol", s.rel_improvement_tol);
  f.get("patience_epochs", s.patience_epochs);
  f.get("max_epochs", s.max_epochs);
  require(s.max_epochs >= 1, "stop.max_epochs must be at least 1");
  require(s.patience_epochs >= 1, "stop.patience_epochs must be at least 1");
  f.finish();
}

void parse_sharpness(const json& j, SharpnessSettings& s) {
  Fields f(j, "sharpness");
  f.get("epsilons", s.epsilons);
  f.get("subspace_dim", s.subspace_dim);
  f.get("subspace_seed", s.subspace_seed);
  f.get("max_outer", s.max_outer);
  f.get("restarts", s.restarts);
  f.get("restart_seed", s.restart_seed);
  if (f.has("subspaces")) {
    std::vector<std::string> kinds = f.at("subspaces").get<std::vector<std::string>>();
    s.full_space = s.random_subspace = false;
    for (const auto& k : kinds) {
      if (k == "full") s.full_space = true;
      else if (k == "random") s.random_subspace = true;
      else throw ConfigError("sharpness.subspaces entries must be \"full\" or \"random\"");
    }
  }
  require(!s.epsilons.empty(), "sharpness.epsilons must not be empty");
  for (double e : s.epsilons) require(e > 0.0 && std::isfinite(e), "sharpness epsilons must be positive");
  require(s.subspace_dim >= 1, "sharpness.subspace_dim must be at least 1");
  require(s.full_space || s.random_subspace, "sharpness.subspaces must not be empty");
  f.finish();
}

void parse_augment(const json& j, data::AugmentPolicy& a) {
  Fields f(j, "remedies.augment");
  f.get("horizontal_flip", a.horizontal_flip);
  f.get("max_rotation_degrees", a.max_rotation_degrees);
  f.get("max_translation_fraction", a.max_translation_fraction);
  f.get("seed", a.seed);
  require(a.max_rotation_degrees >= 0.0 && a.max_translation_fraction >= 0.0,
          "augmentation limits must be non-negative");
  f.finish();
}

ExperimentConfig parse_config_fields(const json& j) {
  ExperimentConfig cfg;
  Fields f(j, "config");
  if (f.has("data")) parse_data(f.at("data"), cfg.data);
  if (f.has("network")) parse_network(f.at("network"), cfg);
  if (f.has("regimes")) {
    Fields r(f.at("regimes"), "regimes");
    r.get("sb_batch", cfg.sb_batch);
    r.get("lb_fraction", cfg.lb_fraction);
    r.finish();
  }
  if (f.has("optimizer")) parse_optimizer(f.at("optimizer"), cfg.train);
  if (f.has("stop")) parse_stop(f.at("stop"), cfg.train.stop);
  f.get("trials", cfg.trials);
  f.get("seed", cfg.seed);
  if (f.has("sharpness")) parse_sharpness(f.at("sharpness"), cfg.sharpness);
  if (f.has("slice")) {
    Fields s(f.at("slice"), "slice");
    s.get("points", cfg.slice.points);
    if (s.has("range")) {
      auto r = s.at("range").get<std::vector<double>>();
      require(r.size() == 2 && r[0] < r[1], "slice.range must be [lo, hi] with lo < hi");
      cfg.slice.lo = r[0];
      cfg.slice.hi = r[1];
    }
    if (s.has("kinds")) {
      cfg.slice.linear = cfg.slice.curvilinear = false;
      for (const auto& k : s.at("kinds").get<std::vector<std::string>>()) {
        if (k == "linear") cfg.slice.linear = true;
        else if (k == "curvilinear") cfg.slice.curvilinear = true;
        else throw ConfigError("slice.kinds entries must be \"linear\" or \"curvilinear\"");
      }
    }
    require(cfg.slice.points >= 1, "slice.points must be at least 1");
    s.finish();
  }
  if (f.has("sweep")) {
    Fields s(f.at("sweep"), "sweep");
    s.get("batch_sizes", cfg.sweep.batch_sizes);
    s.get("epochs", cfg.sweep.epochs);
    for (std::size_t b : cfg.sweep.batch_sizes) require(b >= 1, "sweep.batch_sizes must be positive");
    require(cfg.sweep.epochs >= 1, "sweep.epochs must be at least 1");
    s.finish();
  }
  if (f.has("piggyback")) {
    Fields s(f.at("piggyback"), "piggyback");
    s.get("epochs", cfg.piggyback.epochs);
    if (s.has("warm_epochs")) cfg.piggyback.warm_epochs = s.at("warm_epochs").get<std::vector<std::size_t>>();
    require(cfg.piggyback.epochs >= 1, "piggyback.epochs must be at least 1");
    if (cfg.piggyback.warm_epochs)
      for (std::size_t w : *cfg.piggyback.warm_epochs)
        require(w <= cfg.piggyback.epochs, "piggyback.warm_epochs entries must not exceed piggyback.epochs");
    s.finish();
  }
  if (f.has("trajectory")) {
    Fields s(f.at("trajectory"), "trajectory");
    s.get("stride", cfg.trajectory.stride);
    require(cfg.trajectory.stride >= 1, "trajectory.stride must be at least 1");
    s.finish();
  }
  if (f.has("remedies")) {
    Fields s(f.at("remedies"), "remedies");
    s.get("strategies", cfg.remedies.strategies);
    s.get("lambda", cfg.remedies.lambda);
    s.get("inner_iters", cfg.remedies.inner_iters);
    s.get("eta", cfg.remedies.eta);
    if (s.has("augment")) parse_augment(s.at("augment"), cfg.remedies.augment);
    for (const auto& name : cfg.remedies.strategies)
      require(name == "augment" || name == "conservative" || name == "adversarial",
              "unknown remedy strategy \"" + name + "\"");
    require(cfg.remedies.lambda >= 0.0, "remedies.lambda must be non-negative");
    require(cfg.remedies.inner_iters >= 1, "remedies.inner_iters must be at least 1");
    require(cfg.remedies.eta >= 0.0, "remedies.eta must be non-negative");
    s.finish();
  }
  if (f.has("perfmodel")) {
    Fields s(f.at("perfmodel"), "perfmodel");
    s.get("I_s", cfg.perf.iters_small);
    s.get("I_l", cfg.perf.iters_large);
    s.get("B_s", cfg.perf.batch_small);
    s.get("B_l", cfg.perf.batch_large);
    s.get("P", cfg.perf.processors);
    s.get("f_s", cfg.perf.efficiency_small);
    s.finish();
  }
  f.get("solutions_dir", cfg.solutions_dir);

  require(cfg.trials >= 1, "trials must be at least 1");
  require(cfg.lb_fraction > 0.0 && cfg.lb_fraction <= 1.0, "regimes.lb_fraction must lie in (0, 1]");
  require(cfg.sb_batch >= 1, "regimes.sb_batch must be at least 1");
  f.finish();

  cfg.source = j;
  cfg.source.erase("solutions_dir");
  return cfg;
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  try {
    return parse_config_fields(j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream text;
  text << in.rdbuf();
  json j;
  try {
    j = json::parse(text.str());
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : cfg.source.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace minima::harness
