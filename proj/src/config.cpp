#include "gmlsnet/config.hpp"

#include <cmath>

#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "gmlsnet/error.hpp"

namespace gmls {

namespace {

int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

// A mapping whose keys must all be consumed before finish().
class Section {
 public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (!node_.IsMap()) throw ConfigError("'" + path_ + "' must be a mapping", line_of(node_));
  }

  bool has(const std::string& key) const { return static_cast<bool>(node_[key]); }

  template <class T>
  T get(const std::string& key) {
    const YAML::Node n = node_[key];
    if (!n) throw ConfigError("missing required key '" + qualified(key) + "'", line_of(node_));
    used_.insert(key);
    return convert<T>(n, key);
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    return has(key) ? get<T>(key) : fallback;
  }

  /// A missing optional section reads as empty, so every key takes its default.
  Section child(const std::string& key, bool required = false) {
    const YAML::Node n = node_[key];
    if (!n) {
      if (required) throw ConfigError("missing required section '" + qualified(key) + "'", line_of(node_));
      Section empty(YAML::Node(YAML::NodeType::Map), qualified(key));
      empty.line_ = line();
      return empty;
    }
    used_.insert(key);
    return Section(n, qualified(key));
  }

  std::vector<std::string> keys() const {
    std::vector<std::string> out;
    for (const auto& kv : node_) out.push_back(kv.first.as<std::string>());
    return out;
  }

  int line() const { return line_of(node_) > 0 ? line_of(node_) : line_; }
  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  /// Rejects keys that were never read.
  void finish() const {
    for (const auto& kv : node_) {
      const std::string k = kv.first.as<std::string>();
      if (!used_.count(k)) throw ConfigError("unknown key '" + qualified(k) + "'", line_of(kv.first));
    }
  }

 private:
  template <class T>
  T convert(const YAML::Node& n, const std::string& key) const {
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError("key '" + qualified(key) + "' has the wrong type", line_of(n));
    }
  }

  YAML::Node node_;
  std::string path_;
  std::set<std::string> used_;
  int line_ = 0;
};

double positive(Section& s, const std::string& key, double fallback) {
  const double v = s.get<double>(key, fallback);
  if (!(v > 0.0)) throw ConfigError("'" + s.qualified(key) + "' must be positive", s.line());
  return v;
}

std::size_t count(Section& s, const std::string& key, std::size_t fallback) {
  const long long v = s.get<long long>(key, static_cast<long long>(fallback));
  if (v <= 0) throw ConfigError("'" + s.qualified(key) + "' must be a positive integer", s.line());
  return static_cast<std::size_t>(v);
}

TrainConfig read_optimizer(Section& parent, std::uint64_t seed) {
  Section s = parent.child("optimizer");
  TrainConfig t;
  t.seed = seed;
  try {
    t.optimizer.kind = optimizer_from_string(s.get<std::string>("kind", "adam"));
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what(), s.line());
  }
  t.optimizer.learning_rate = positive(s, "learning_rate", 1e-3);
  t.optimizer.beta1 = s.get<double>("beta1", 0.9);
  t.optimizer.beta2 = s.get<double>("beta2", 0.999);
  t.optimizer.epsilon = positive(s, "epsilon", 1e-8);
  t.epochs = count(s, "epochs", 10);
  t.batch_size = count(s, "batch_size", 32);
  t.lr_decay = positive(s, "lr_decay", 1.0);
  s.finish();
  return t;
}

DiscretizationSection read_discretization(Section s, DiscretizationSection d) {
  d.epsilon_cells = positive(s, "epsilon_cells", d.epsilon_cells);
  d.order = s.get<int>("order", d.order);
  d.kernel_power = s.get<int>("kernel_power", d.kernel_power);
  if (d.order < 0 || d.order > 8) throw ConfigError("'" + s.qualified("order") + "' must lie in [0, 8]", s.line());
  s.finish();
  return d;
}

RegressCase read_case(Section s, std::uint64_t seed) {
  RegressCase c;
  {
    Section g = s.child("geometry");
    c.nodes_per_axis = count(g, "nodes_per_axis", c.nodes_per_axis);
    const std::string layout = g.get<std::string>("layout", "grid");
    if (layout != "grid" && layout != "random")
      throw ConfigError("'" + g.qualified("layout") + "' must be grid or random", g.line());
    c.random_layout = layout == "random";
    g.finish();
  }
  {
    Section k = s.child("kernel");
    c.epsilon_spacings = positive(k, "epsilon_spacings", c.epsilon_spacings);
    c.kernel_power = k.get<int>("power", c.kernel_power);
    k.finish();
  }
  {
    Section b = s.child("basis");
    c.order = b.get<int>("order", c.order);
    b.finish();
  }
  {
    Section n = s.child("network");
    const std::string map = n.get<std::string>("map", "linear");
    if (map != "linear" && map != "mlp") throw ConfigError("'" + n.qualified("map") + "' must be linear or mlp", n.line());
    c.mlp = map == "mlp";
    c.hidden = n.get<std::vector<std::size_t>>("hidden", {});
    c.activation = activation_from_string(n.get<std::string>("activation", "relu"));
    n.finish();
  }
  c.train = read_optimizer(s, seed);
  {
    Section t = s.child("thresholds");
    c.max_test_relative_l2 = positive(t, "test_relative_l2", c.max_test_relative_l2);
    t.finish();
  }
  s.finish();
  return c;
}

RegressConfig read_regress(Section& root, std::uint64_t seed) {
  RegressConfig r;
  r.op = root.get<std::string>("operator", r.op);
  r.dim = root.get<int>("dim", r.dim);
  {
    Section d = root.child("dataset");
    r.train_samples = count(d, "train", r.train_samples);
    r.test_samples = count(d, "test", r.test_samples);
    r.max_wavenumber = d.get<int>("max_wavenumber", r.max_wavenumber);
    r.alpha1 = positive(d, "alpha1", r.alpha1);
    r.burgers_viscosity = d.get<double>("burgers_viscosity", r.burgers_viscosity);
    d.finish();
  }
  Section cases = root.child("cases", true);
  for (const std::string& key : cases.keys()) r.cases.emplace(key, read_case(cases.child(key), seed));
  cases.finish();
  if (!r.cases.count(RegressConfig::case_key(r.op, r.dim)))
    throw ConfigError("no case '" + RegressConfig::case_key(r.op, r.dim) + "' under 'cases'", cases.line());
  return r;
}

AdvDiffExperimentConfig read_advdiff(Section& root, std::uint64_t seed) {
  AdvDiffExperimentConfig a;
  {
    Section p = root.child("physics");
    a.advection = positive(p, "advection", a.advection);
    a.diffusion = positive(p, "diffusion", a.diffusion);
    a.x0 = p.get<double>("x0", a.x0);
    a.length = positive(p, "length", a.length);
    a.cells = count(p, "cells", a.cells);
    p.finish();
  }
  {
    Section t = root.child("time");
    a.train_time = positive(t, "train_time", a.train_time);
    a.horizon_cfl_steps = positive(t, "horizon_cfl_steps", a.horizon_cfl_steps);
    a.dt_ratios = t.get<std::vector<double>>("dt_ratios", a.dt_ratios);
    if (a.dt_ratios.empty()) throw ConfigError("'time.dt_ratios' must not be empty", t.line());
    for (double r : a.dt_ratios)
      if (!(r > 0.0)) throw ConfigError("'time.dt_ratios' entries must be positive", t.line());
    t.finish();
  }
  a.fdm = read_discretization(root.child("fdm"), a.fdm);
  a.fvm = read_discretization(root.child("fvm"), a.fvm);
  a.train = read_optimizer(root, seed);
  {
    Section t = root.child("thresholds");
    a.linearity_factor = positive(t, "linearity_factor", a.linearity_factor);
    a.min_trained_gain = positive(t, "min_trained_gain", a.min_trained_gain);
    a.gain_ratio = positive(t, "gain_ratio", a.gain_ratio);
    a.max_trained_spread = positive(t, "max_trained_spread", a.max_trained_spread);
    t.finish();
  }
  return a;
}

BrownianExperimentConfig read_brownian(Section& root, std::uint64_t seed) {
  BrownianExperimentConfig b;
  {
    Section p = root.child("particles");
    b.particles = count(p, "count", b.particles);
    b.diffusivity = p.get<double>("diffusivity", b.diffusivity);
    b.lx = positive(p, "lx", b.lx);
    b.ly = positive(p, "ly", b.ly);
    b.dt = positive(p, "dt", b.dt);
    p.finish();
  }
  {
    Section d = root.child("density");
    b.cells = count(d, "cells", b.cells);
    b.filter_sigma_cells = positive(d, "filter_sigma_cells", b.filter_sigma_cells);
    d.finish();
  }
  {
    Section w = root.child("window");
    b.window_start = w.get<std::size_t>("start", b.window_start);
    b.window_end = count(w, "end", b.window_end);
    if (b.window_end <= b.window_start) throw ConfigError("'window.end' must exceed 'window.start'", w.line());
    w.finish();
  }
  b.fvm = read_discretization(root.child("fvm"), b.fvm);
  {
    Section r = root.child("rollout");
    b.rollout_steps = count(r, "steps", b.rollout_steps);
    const std::string init = r.get<std::string>("initial", "histogram");
    if (init != "histogram" && init != "filtered")
      throw ConfigError("'rollout.initial' must be histogram or filtered", r.line());
    b.filtered_initial = init == "filtered";
    r.finish();
  }
  b.train = read_optimizer(root, seed);
  {
    Section t = root.child("thresholds");
    b.max_final_relative_l2 = positive(t, "final_relative_l2", b.max_final_relative_l2);
    t.finish();
  }
  return b;
}

QoiExperimentConfig read_qoi(Section& root, std::uint64_t seed) {
  QoiExperimentConfig q;
  {
    Section g = root.child("geometry");
    q.dim = g.get<int>("dim", q.dim);
    q.points = count(g, "points", q.points);
    const std::string layout = g.get<std::string>("layout", "random");
    if (layout != "jittered" && layout != "random")
      throw ConfigError("'" + g.qualified("layout") + "' must be jittered or random", g.line());
    q.jittered = layout == "jittered";
    q.pooled_points = count(g, "pooled_points", q.pooled_points);
    const std::string pooled = g.get<std::string>("pooled_layout", "grid");
    if (pooled != "grid" && pooled != "subsample")
      throw ConfigError("'" + g.qualified("pooled_layout") + "' must be grid or subsample", g.line());
    q.pooled_grid = pooled == "grid";
    auto perfect_power = [&](std::size_t n) {
      const auto r = static_cast<std::size_t>(std::llround(std::pow(static_cast<double>(n), 1.0 / q.dim)));
      return static_cast<std::size_t>(std::llround(std::pow(static_cast<double>(r), q.dim))) == n;
    };
    if (q.dim < 1 || q.dim > 2) throw ConfigError("'" + g.qualified("dim") + "' must be 1 or 2", g.line());
    if (q.jittered && !perfect_power(q.points))
      throw ConfigError("'geometry.points' must be a perfect power of the dimension for a jittered layout", g.line());
    if (q.pooled_grid && !perfect_power(q.pooled_points))
      throw ConfigError("'geometry.pooled_points' must be a perfect power of the dimension for a grid", g.line());
    if (q.pooled_points > q.points) throw ConfigError("'geometry.pooled_points' exceeds 'geometry.points'", g.line());
    g.finish();
  }
  {
    Section d = root.child("dataset");
    q.train_samples = count(d, "train", q.train_samples);
    q.test_samples = count(d, "test", q.test_samples);
    q.max_wavenumber = d.get<int>("max_wavenumber", q.max_wavenumber);
    q.alpha1 = positive(d, "alpha1", q.alpha1);
    d.finish();
  }
  {
    Section n = root.child("network");
    q.encoder_epsilon = positive(n, "encoder_epsilon", q.encoder_epsilon);
    q.encoder_order = n.get<int>("encoder_order", q.encoder_order);
    q.hidden = n.get<std::vector<std::size_t>>("hidden", q.hidden);
    q.channels = count(n, "channels", q.channels);
    q.pool_epsilon = positive(n, "pool_epsilon", q.pool_epsilon);
    q.second_epsilon = positive(n, "second_epsilon", q.second_epsilon);
    q.second_order = n.get<int>("second_order", q.second_order);
    q.second_channels = count(n, "second_channels", q.second_channels);
    n.finish();
  }
  q.train = read_optimizer(root, seed);
  {
    Section t = root.child("thresholds");
    q.max_test_relative_rmse = positive(t, "test_relative_rmse", q.max_test_relative_rmse);
    t.finish();
  }
  return q;
}

}  // namespace

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::regress_operator: return "regress-operator";
    case ExperimentKind::advdiff: return "advdiff";
    case ExperimentKind::brownian: return "brownian";
    case ExperimentKind::qoi: return "qoi";
  }
  return "?";
}

ExperimentKind experiment_from_string(const std::string& tag) {
  for (ExperimentKind k : {ExperimentKind::regress_operator, ExperimentKind::advdiff, ExperimentKind::brownian,
                           ExperimentKind::qoi})
    if (to_string(k) == tag) return k;
  throw ConfigError("unknown experiment '" + tag + "'");
}

const RegressCase& RegressConfig::active() const {
  auto it = cases.find(case_key(op, dim));
  if (it == cases.end()) throw ConfigError("no case '" + case_key(op, dim) + "' in the regression config");
  return it->second;
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& source) {
  YAML::Node doc;
  try {
    doc = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(e.msg, e.mark.line + 1);
  }
  if (!doc || doc.IsNull()) throw ConfigError("empty configuration");
  try {
    Section root(doc, "");
    ExperimentConfig cfg;
    cfg.source = source;
    const std::string tag = root.get<std::string>("experiment");
    try {
      cfg.kind = experiment_from_string(tag);
    } catch (const ConfigError&) {
      throw ConfigError("unknown experiment '" + tag + "'", line_of(doc["experiment"]));
    }
    cfg.seed = root.get<std::uint64_t>("seed", 0);
    cfg.output_dir = root.get<std::string>("output_dir", "out/" + tag);
    switch (cfg.kind) {
      case ExperimentKind::regress_operator: cfg.params = read_regress(root, cfg.seed); break;
      case ExperimentKind::advdiff: cfg.params = read_advdiff(root, cfg.seed); break;
      case ExperimentKind::brownian: cfg.params = read_brownian(root, cfg.seed); break;
      case ExperimentKind::qoi: cfg.params = read_qoi(root, cfg.seed); break;
    }
    root.finish();
    return cfg;
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str(), path);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what(), e.line());
  }
}

void apply_overrides(ExperimentConfig& cfg, const ConfigOverrides& o) {
  if (o.seed) {
    cfg.seed = *o.seed;
    std::visit(
        [&](auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, RegressConfig>) {
            for (auto& [k, c] : p.cases) c.train.seed = *o.seed;
          } else {
            p.train.seed = *o.seed;
          }
        },
        cfg.params);
  }
  if (o.output_dir) cfg.output_dir = *o.output_dir;
  if (o.op || o.dim) {
    if (cfg.kind != ExperimentKind::regress_operator) throw ConfigError("--op and --dim apply to regress-operator only");
    auto& r = cfg.as<RegressConfig>();
    if (o.op) r.op = *o.op;
    if (o.dim) r.dim = *o.dim;
    r.active();
  }
  if (o.dt_ratio) {
    if (cfg.kind != ExperimentKind::advdiff) throw ConfigError("--dt-ratio applies to advdiff only");
    if (!(*o.dt_ratio > 0.0)) throw ConfigError("--dt-ratio must be positive");
    cfg.as<AdvDiffExperimentConfig>().dt_ratios = {*o.dt_ratio};
  }
}

}  // namespace gmls
