#include "gmlsnet/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

#include "gmlsnet/datagen.hpp"
#include "gmlsnet/error.hpp"
#include "gmlsnet/integrators.hpp"
#include "gmlsnet/parallel.hpp"

namespace gmls {

namespace {

// Independent RNG streams derived from the master seed. Sample i uses stream i.
constexpr std::uint64_t kCloudStream = 1ULL << 40;
constexpr std::uint64_t kSubsampleStream = (1ULL << 40) + 1;
constexpr std::uint64_t kInitStream = (1ULL << 40) + 2;
constexpr std::uint64_t kHeadStream = (1ULL << 40) + 3;
constexpr std::uint64_t kParticleStream = (1ULL << 40) + 4;

std::string label(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

std::string sample_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%05zu.csv", i);
  return buf;
}

Json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

// NaN and infinities are not representable in JSON.
Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Check upper_check(std::string name, double value, double threshold) {
  return {std::move(name), value, threshold, true, std::isfinite(value) && value <= threshold};
}

Check lower_check(std::string name, double value, double threshold) {
  return {std::move(name), value, threshold, false, std::isfinite(value) && value >= threshold};
}

ExperimentResult finish(const ExperimentConfig& cfg, Json metrics, std::vector<Check> checks) {
  ExperimentResult r;
  r.checks = std::move(checks);
  r.passed = std::all_of(r.checks.begin(), r.checks.end(), [](const Check& c) { return c.passed; });
  Json j;
  j["experiment"] = to_string(cfg.kind);
  j["seed"] = cfg.seed;
  j["metrics"] = std::move(metrics);
  Json jc = Json::array();
  for (const Check& c : r.checks) {
    Json e;
    e["name"] = c.name;
    e["value"] = number(c.value);
    e["threshold"] = c.threshold;
    e["comparison"] = c.upper ? "<=" : ">=";
    e["passed"] = c.passed;
    jc.push_back(e);
  }
  j["checks"] = jc;
  j["passed"] = r.passed;
  r.metrics = j;
  write_json(cfg.output_dir / "metrics.json", j);
  return r;
}

Json history_json(const std::vector<EpochRecord>& h) {
  Json j;
  j["epochs"] = h.empty() ? 0 : h.back().epoch;
  j["initial_train_loss"] = h.empty() ? Json(nullptr) : number(h.front().train_loss);
  j["final_train_loss"] = h.empty() ? Json(nullptr) : number(h.back().train_loss);
  j["final_test_loss"] = h.empty() ? Json(nullptr) : number(h.back().test_loss);
  return j;
}

// ---------------------------------------------------------------- regression

SpectralField regress_field(const RegressConfig& r, std::uint64_t seed, std::size_t index) {
  RandomFieldConfig rc;
  rc.dim = r.dim;
  rc.length = 1.0;
  rc.max_wavenumber = r.max_wavenumber;
  rc.alpha1 = r.alpha1;
  rc.seed = derive_seed(seed, index);
  return random_spectrum(rc);
}

SpectralOp regress_op(const RegressConfig& r) {
  if (r.op == "laplacian") return SpectralOp::laplacian;
  if (r.op == "burgers") return SpectralOp::burgers;
  throw ConfigError("unknown operator '" + r.op + "' (expected laplacian or burgers)");
}

Json regress_metadata(const ExperimentConfig& cfg) {
  const auto& r = cfg.as<RegressConfig>();
  Json j;
  j["experiment"] = to_string(cfg.kind);
  j["seed"] = cfg.seed;
  j["operator"] = r.op;
  j["dim"] = r.dim;
  j["train_samples"] = r.train_samples;
  j["test_samples"] = r.test_samples;
  j["max_wavenumber"] = r.max_wavenumber;
  j["alpha1"] = r.alpha1;
  j["burgers_viscosity"] = r.burgers_viscosity;
  return j;
}

RegressConfig regress_from_metadata(const Json& m) {
  RegressConfig r;
  r.op = m.at("operator").get<std::string>();
  r.dim = m.at("dim").get<int>();
  r.train_samples = m.at("train_samples").get<std::size_t>();
  r.test_samples = m.at("test_samples").get<std::size_t>();
  r.max_wavenumber = m.at("max_wavenumber").get<int>();
  r.alpha1 = m.at("alpha1").get<double>();
  r.burgers_viscosity = m.at("burgers_viscosity").get<double>();
  return r;
}

Network regress_network(const RegressCase& c, const RegressGeometry& geo, int dim, std::uint64_t seed) {
  const double eps = c.epsilon_spacings * geo.spacing;
  auto enc = std::make_shared<const CoefficientEncoder>(geo.cloud, geo.cloud, WeightKernel{eps, c.kernel_power},
                                                        MonomialBasis(dim, c.order, eps));
  FunctionalMap map = c.mlp ? FunctionalMap::mlp(enc->q(), c.hidden, 1, c.activation) : FunctionalMap::linear(1, enc->q());
  map.initialize(derive_seed(seed, kInitStream));
  Network net;
  net.add(GMLSLayer(enc, 1, std::move(map)));
  return net;
}

Json regress_eval_metrics(const Network& net, const Dataset& test) {
  Json j;
  j["test_relative_l2"] = number(relative_l2(net, test));
  j["test_loss"] = number(evaluate(net, test));
  return j;
}

ExperimentResult run_regress(const ExperimentConfig& cfg) {
  const auto& r = cfg.as<RegressConfig>();
  const RegressCase& c = r.active();
  const RegressGeometry geo = regress_geometry(r, cfg.seed);
  Network net = regress_network(c, geo, r.dim, cfg.seed);
  const Dataset train_set = regress_dataset(r, *geo.cloud, cfg.seed, 0, r.train_samples);
  const Dataset test_set = regress_dataset(r, *geo.cloud, cfg.seed, r.train_samples, r.test_samples);

  const auto history = train(net, train_set, &test_set, c.train);
  write_history_csv(cfg.output_dir / "history.csv", history);

  const GMLSLayer& layer = std::get<GMLSLayer>(net.stages().front());
  Json m;
  m["case"] = RegressConfig::case_key(r.op, r.dim);
  m["points"] = geo.cloud->size();
  m["epsilon"] = layer.encoder().kernel().epsilon;
  m["order"] = c.order;
  m["q"] = layer.q();
  m["map"] = c.mlp ? "mlp" : "linear";
  m["train_samples"] = r.train_samples;
  m["test_samples"] = r.test_samples;
  m["training"] = history_json(history);
  m["train_relative_l2"] = number(relative_l2(net, train_set));
  m.update(regress_eval_metrics(net, test_set));

  if (layer.map().is_linear()) {
    const Eigen::VectorXd xi = layer.map().weight(0).row(0).transpose();
    m["xi"] = vector_json(xi);
    const StencilMatrix stencil = export_stencil(layer);
    write_stencil_csv(cfg.output_dir / "stencil.csv", stencil);
    if (r.op == "laplacian") {
      // the same layer with xi set to the exact Laplacian image of the basis
      const TargetOperator op = r.dim == 1 ? TargetOperator::d2_dx2() : TargetOperator::laplacian();
      const Eigen::VectorXd tau = apply_operator_to_basis(layer.encoder().basis(), op);
      Network ref = net;
      ref.parameters()[0].value->row(0) = tau.transpose();
      m["reference_xi"] = vector_json(tau);
      m["reference_test_relative_l2"] = number(relative_l2(ref, test_set));
    }
  }

  const Field pred = network_forward(net, test_set.inputs.front());
  Field sample(geo.cloud->size(), 3);
  sample << test_set.inputs.front(), test_set.targets.front(), pred;
  write_field_csv(cfg.output_dir / "test_sample.csv", *geo.cloud, sample, {"input", "target", "prediction"});

  save_checkpoint(cfg.output_dir / "checkpoint.json", net, regress_metadata(cfg));
  return finish(cfg, m, {upper_check("test_relative_l2", m["test_relative_l2"].is_null() ? NAN : m["test_relative_l2"].get<double>(),
                                     c.max_test_relative_l2)});
}

void gen_regress(const ExperimentConfig& cfg) {
  const auto& r = cfg.as<RegressConfig>();
  const RegressGeometry geo = regress_geometry(r, cfg.seed);
  const std::filesystem::path dir = cfg.output_dir;
  write_field_csv(dir / "cloud.csv", *geo.cloud, Field(geo.cloud->size(), 0));
  Json manifest = regress_metadata(cfg);
  manifest["case"] = RegressConfig::case_key(r.op, r.dim);
  manifest["cloud"] = {{"file", "cloud.csv"}, {"hash", file_hash(dir / "cloud.csv")}};
  auto split = [&](const char* name, std::size_t first, std::size_t count) {
    const Dataset d = regress_dataset(r, *geo.cloud, cfg.seed, first, count);
    Json entries = Json::array();
    for (std::size_t s = 0; s < d.size(); ++s) {
      const std::filesystem::path rel = std::filesystem::path(name) / sample_name(s);
      Field f(geo.cloud->size(), 2);
      f << d.inputs[s], d.targets[s];
      write_field_csv(dir / rel, *geo.cloud, f, {"input", "target"});
      entries.push_back({{"file", rel.generic_string()}, {"seed", derive_seed(cfg.seed, first + s)},
                         {"hash", file_hash(dir / rel)}});
    }
    manifest[name] = entries;
  };
  split("train", 0, r.train_samples);
  split("test", r.train_samples, r.test_samples);
  write_json(dir / "manifest.json", manifest);
}

// ----------------------------------------------------------------------- qoi

struct QoiGeometry {
  std::shared_ptr<const PointCloud> cloud;
  std::shared_ptr<const PointCloud> pooled;
};

QoiGeometry qoi_geometry(const QoiExperimentConfig& q, std::uint64_t seed) {
  const std::uint64_t cs = derive_seed(seed, kCloudStream);
  std::shared_ptr<const PointCloud> cloud;
  if (q.jittered) {
    const auto n = static_cast<std::size_t>(std::llround(std::pow(static_cast<double>(q.points), 1.0 / q.dim)));
    cloud = std::make_shared<const PointCloud>(jittered_grid(q.dim, n, 1.0, 0.5, cs, true));
  } else {
    cloud = std::make_shared<const PointCloud>(random_cloud(q.dim, q.points, 1.0, cs, true));
  }
  std::shared_ptr<const PointCloud> pooled;
  if (q.pooled_grid) {
    const auto n = static_cast<std::size_t>(std::llround(std::pow(static_cast<double>(q.pooled_points), 1.0 / q.dim)));
    pooled = std::make_shared<const PointCloud>(uniform_grid(q.dim, n, 1.0, true));
  } else {
    pooled = std::make_shared<const PointCloud>(cloud->subsample(q.pooled_points, derive_seed(seed, kSubsampleStream)));
  }
  return {cloud, pooled};
}

Dataset qoi_dataset(const QoiExperimentConfig& q, const PointCloud& cloud, std::uint64_t seed, std::size_t first,
                    std::size_t count) {
  std::vector<Field> inputs(count), targets(count);
  parallel_for(count, [&](std::size_t s) {
    RandomFieldConfig rc;
    rc.dim = q.dim;
    rc.max_wavenumber = q.max_wavenumber;
    rc.alpha1 = q.alpha1;
    rc.seed = derive_seed(seed, first + s);
    const SpectralField f = random_spectrum(rc);
    inputs[s] = f.sample(cloud);
    targets[s] = Field::Constant(1, 1, field_energy(f));
  });
  Dataset d;
  for (std::size_t s = 0; s < count; ++s) d.add(std::move(inputs[s]), std::move(targets[s]));
  return d;
}

Network qoi_network(const QoiExperimentConfig& q, const QoiGeometry& g, std::uint64_t seed) {
  auto enc1 = std::make_shared<const CoefficientEncoder>(g.cloud, g.cloud, WeightKernel{q.encoder_epsilon, 4},
                                                         MonomialBasis(q.dim, q.encoder_order, q.encoder_epsilon));
  FunctionalMap m1 = FunctionalMap::mlp(enc1->q(), q.hidden, q.channels);
  m1.initialize(derive_seed(seed, kInitStream));
  auto enc2 = std::make_shared<const CoefficientEncoder>(g.pooled, g.pooled, WeightKernel{q.second_epsilon, 4},
                                                         MonomialBasis(q.dim, q.second_order, q.second_epsilon));
  FunctionalMap m2 = FunctionalMap::linear(q.second_channels, q.channels * enc2->q());
  m2.initialize(derive_seed(seed, kInitStream + 16));
  Network net;
  net.add(GMLSLayer(enc1, 1, std::move(m1)));
  net.add(PoolingLayer(Reducer::mean, g.cloud, g.pooled, q.pool_epsilon));
  net.add(GMLSLayer(enc2, q.channels, std::move(m2)));
  net.add_activation(Activation::relu);
  net.add_mean_readout();
  net.add_affine_head(1, derive_seed(seed, kHeadStream));
  return net;
}

Json qoi_metadata(const ExperimentConfig& cfg) {
  const auto& q = cfg.as<QoiExperimentConfig>();
  Json j;
  j["experiment"] = to_string(cfg.kind);
  j["seed"] = cfg.seed;
  j["dim"] = q.dim;
  j["train_samples"] = q.train_samples;
  j["test_samples"] = q.test_samples;
  j["max_wavenumber"] = q.max_wavenumber;
  j["alpha1"] = q.alpha1;
  return j;
}

Json qoi_eval_metrics(const Network& net, const Dataset& test) {
  Json j;
  // relative RMSE = sqrt(sum (pred - y)^2 / sum y^2) over the split
  j["test_relative_rmse"] = number(relative_l2(net, test));
  j["test_loss"] = number(evaluate(net, test));
  return j;
}

ExperimentResult run_qoi(const ExperimentConfig& cfg) {
  const auto& q = cfg.as<QoiExperimentConfig>();
  const QoiGeometry g = qoi_geometry(q, cfg.seed);
  Network net = qoi_network(q, g, cfg.seed);
  const Dataset train_set = qoi_dataset(q, *g.cloud, cfg.seed, 0, q.train_samples);
  const Dataset test_set = qoi_dataset(q, *g.cloud, cfg.seed, q.train_samples, q.test_samples);
  const auto history = train(net, train_set, &test_set, q.train);
  write_history_csv(cfg.output_dir / "history.csv", history);

  Json m;
  m["points"] = q.points;
  m["pooled_points"] = q.pooled_points;
  m["train_samples"] = q.train_samples;
  m["test_samples"] = q.test_samples;
  m["training"] = history_json(history);
  m["train_relative_rmse"] = number(relative_l2(net, train_set));
  m.update(qoi_eval_metrics(net, test_set));
  // baseline: predicting the mean training label for every sample
  double mean = 0.0;
  for (const Field& t : train_set.targets) mean += t(0, 0);
  mean /= static_cast<double>(train_set.size());
  double num = 0.0, den = 0.0;
  std::vector<std::vector<double>> rows;
  for (std::size_t s = 0; s < test_set.size(); ++s) {
    const double y = test_set.targets[s](0, 0);
    num += (y - mean) * (y - mean);
    den += y * y;
    rows.push_back({static_cast<double>(s), y, network_forward(net, test_set.inputs[s])(0, 0)});
  }
  m["mean_predictor_relative_rmse"] = std::sqrt(num / den);
  write_csv(cfg.output_dir / "test_predictions.csv", {"sample", "label", "prediction"}, rows);
  save_checkpoint(cfg.output_dir / "checkpoint.json", net, qoi_metadata(cfg));
  const double v = m["test_relative_rmse"].is_null() ? NAN : m["test_relative_rmse"].get<double>();
  return finish(cfg, m, {upper_check("test_relative_rmse", v, q.max_test_relative_rmse)});
}

void gen_qoi(const ExperimentConfig& cfg) {
  const auto& q = cfg.as<QoiExperimentConfig>();
  const QoiGeometry g = qoi_geometry(q, cfg.seed);
  const std::filesystem::path dir = cfg.output_dir;
  write_field_csv(dir / "cloud.csv", *g.cloud, Field(g.cloud->size(), 0));
  Json manifest = qoi_metadata(cfg);
  manifest["cloud"] = {{"file", "cloud.csv"}, {"hash", file_hash(dir / "cloud.csv")}};
  auto split = [&](const char* name, std::size_t first, std::size_t count) {
    const Dataset d = qoi_dataset(q, *g.cloud, cfg.seed, first, count);
    Json entries = Json::array();
    for (std::size_t s = 0; s < d.size(); ++s) {
      const std::filesystem::path rel = std::filesystem::path(name) / sample_name(s);
      write_field_csv(dir / rel, *g.cloud, d.inputs[s], {"input"});
      entries.push_back({{"file", rel.generic_string()}, {"seed", derive_seed(cfg.seed, first + s)},
                         {"label", d.targets[s](0, 0)}, {"hash", file_hash(dir / rel)}});
    }
    manifest[name] = entries;
  };
  split("train", 0, q.train_samples);
  split("test", q.train_samples, q.test_samples);
  write_json(dir / "manifest.json", manifest);
}

// ------------------------------------------------------------------- advdiff

struct AdvDiffRow {
  double ratio = 0.0;
  double dt = 0.0;
  std::size_t steps = 0;
  double errors[4] = {0, 0, 0, 0};  // fdm_exact, fdm, fvm_exact, fvm
};

TimeModelOptions advdiff_options(const AdvDiffExperimentConfig& a, ModelKind kind, double dx, double dt) {
  const DiscretizationSection& d = kind == ModelKind::fdm ? a.fdm : a.fvm;
  TimeModelOptions o;
  o.kind = kind;
  o.boundary = kind == ModelKind::fdm ? Boundary::dirichlet : Boundary::zero_flux;
  o.order = d.order;
  o.epsilon = d.epsilon_cells * dx;
  o.kernel_power = d.kernel_power;
  o.dt = dt;
  return o;
}

Eigen::VectorXd advdiff_state(const Mesh1D& mesh, ModelKind kind, double t, const AdvDiffConfig& phys) {
  const auto& x = mesh.nodes();
  if (kind == ModelKind::fdm) {
    Eigen::VectorXd u(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) u[i] = advdiff_exact(x[i], t, phys);
    return u;
  }
  Eigen::VectorXd u(mesh.cells());
  for (std::size_t i = 0; i < mesh.cells(); ++i) u[i] = advdiff_cell_average(x[i], x[i + 1], t, phys);
  return u;
}

ExperimentResult run_advdiff(const ExperimentConfig& cfg) {
  const auto& a = cfg.as<AdvDiffExperimentConfig>();
  AdvDiffConfig phys;
  phys.advection = a.advection;
  phys.diffusion = a.diffusion;
  phys.x0 = a.x0;
  phys.length = a.length;
  phys.cells = a.cells;
  const Mesh1D mesh = Mesh1D::uniform(a.cells, a.length);
  const double dx = a.length / static_cast<double>(a.cells);
  const double dt_cfl = cfl_timestep(mesh, a.advection, a.diffusion);
  const double horizon = a.horizon_cfl_steps * dt_cfl;

  std::vector<double> ratios = a.dt_ratios;
  std::sort(ratios.begin(), ratios.end());
  ratios.erase(std::unique(ratios.begin(), ratios.end()), ratios.end());

  std::vector<AdvDiffRow> rows;
  Json models = Json::array();
  std::optional<TimeModel> checkpoint_model;
  double checkpoint_ratio = 0.0;
  for (double ratio : ratios) {
    AdvDiffRow row;
    row.ratio = ratio;
    row.dt = ratio * dt_cfl;
    row.steps = static_cast<std::size_t>(std::llround(horizon / row.dt));
    if (row.steps == 0) throw ConfigError("dt ratio " + label(ratio) + " exceeds the rollout horizon");
    const double t_end = a.train_time + static_cast<double>(row.steps) * row.dt;
    int col = 0;
    for (ModelKind kind : {ModelKind::fdm, ModelKind::fvm}) {
      const TimeModelOptions o = advdiff_options(a, kind, dx, row.dt);
      const Eigen::VectorXd u0 = advdiff_state(mesh, kind, a.train_time, phys);
      const Eigen::VectorXd u1 = advdiff_state(mesh, kind, a.train_time + row.dt, phys);
      const Eigen::VectorXd ref = advdiff_state(mesh, kind, t_end, phys);

      const TimeModel exact = TimeModel::exact(mesh, o, a.advection, a.diffusion);
      const Eigen::VectorXd exact_final = rollout(exact, u0, row.steps).back();
      row.errors[col++] = l2_error(exact_final, ref, exact.norm_weights());

      TimeModel learned(mesh, o);
      const std::vector<IncrementPair> pairs{{u0, u1}};
      const auto history = train_time_model(learned, pairs, a.train);
      const Eigen::VectorXd learned_final = rollout(learned, u0, row.steps).back();
      row.errors[col++] = l2_error(learned_final, ref, learned.norm_weights());

      // direct least-squares optimum of the same convex objective
      TimeModel direct(mesh, o);
      direct.set_xi(fit_time_model_least_squares(direct, pairs));
      const Objective obj = residual_objective(direct);
      const Dataset inc = increment_dataset(direct, pairs);
      const double ls_loss = evaluate(direct.network(), inc, obj);

      Json jm;
      jm["model"] = to_string(kind);
      jm["dt_ratio"] = ratio;
      jm["training"] = history_json(history);
      jm["least_squares_loss"] = number(ls_loss);
      jm["xi"] = vector_json(learned.xi());
      jm["exact_xi"] = vector_json(exact.xi());
      models.push_back(jm);

      const PointCloud& sc = learned.state_cloud();
      Field f(sc.size(), 4);
      f << ref, u0, exact_final, learned_final;
      PointCloud xs(1, std::vector<double>(kind == ModelKind::fdm ? mesh.nodes() : mesh.centers()));
      write_field_csv(cfg.output_dir / ("final_" + to_string(kind) + "_r" + label(ratio) + ".csv"), xs, f,
                      {"analytic", "initial", "exact_operator", "trained"});
      if (kind == ModelKind::fvm && (!checkpoint_model || std::abs(ratio - a.gain_ratio) < std::abs(checkpoint_ratio - a.gain_ratio))) {
        checkpoint_model = learned;
        checkpoint_ratio = ratio;
      }
    }
    rows.push_back(row);
  }

  std::vector<std::vector<double>> table;
  Json jt = Json::array();
  for (const auto& r : rows) {
    table.push_back({r.ratio, r.errors[0], r.errors[1], r.errors[2], r.errors[3]});
    jt.push_back({{"dt_ratio", r.ratio}, {"dt", r.dt}, {"steps", r.steps}, {"fdm_exact", number(r.errors[0])},
                  {"fdm", number(r.errors[1])}, {"fvm_exact", number(r.errors[2])}, {"fvm", number(r.errors[3])}});
  }
  write_csv(cfg.output_dir / "table.csv", {"dt_ratio", "fdm_exact", "fdm", "fvm_exact", "fvm"}, table);

  Json m;
  m["dx"] = dx;
  m["dt_cfl"] = dt_cfl;
  m["horizon"] = horizon;
  m["train_time"] = a.train_time;
  m["table"] = jt;
  m["models"] = models;

  std::vector<Check> checks;
  // (a) exact operators: errors increase with dt and their increments scale linearly with dt
  for (std::size_t k = 0; k + 2 < rows.size(); ++k) {
    const AdvDiffRow &r0 = rows[k], &r1 = rows[k + 1], &r2 = rows[k + 2];
    const double expected = (r2.ratio - r1.ratio) / (r1.ratio - r0.ratio);
    for (int col : {0, 2}) {
      const double e0 = r0.errors[col], e1 = r1.errors[col], e2 = r2.errors[col];
      const double observed = (e1 > e0 && e2 > e1) ? (e2 - e1) / (e1 - e0) : -1.0;
      const std::string name = std::string(col == 0 ? "fdm_exact" : "fvm_exact") + "_increment_ratio_r" + label(r0.ratio) +
                               "_" + label(r1.ratio) + "_" + label(r2.ratio);
      checks.push_back(lower_check(name + "_min", observed, expected / a.linearity_factor));
      checks.push_back(upper_check(name + "_max", observed, expected * a.linearity_factor));
    }
  }
  // (b) trained FVM beats the exact-operator FVM at the large step
  for (const auto& r : rows)
    if (std::abs(r.ratio - a.gain_ratio) <= 1e-12 * a.gain_ratio) {
      const double gain = r.errors[2] / r.errors[3];
      m["fvm_gain"] = number(gain);
      checks.push_back(lower_check("fvm_exact_over_trained_r" + label(r.ratio), gain, a.min_trained_gain));
    }
  // (c) trained FVM error roughly independent of dt
  if (rows.size() >= 2) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& r : rows) {
      lo = std::min(lo, r.errors[3]);
      hi = std::max(hi, r.errors[3]);
    }
    m["fvm_spread"] = number(hi / lo);
    checks.push_back(upper_check("fvm_trained_spread", hi / lo, a.max_trained_spread));
  }

  Json meta;
  meta["experiment"] = to_string(cfg.kind);
  meta["seed"] = cfg.seed;
  meta["model"] = "fvm";
  meta["dt_ratio"] = checkpoint_ratio;
  meta["dt"] = checkpoint_model->dt();
  save_checkpoint(cfg.output_dir / "checkpoint.json", checkpoint_model->network(), meta);
  return finish(cfg, m, checks);
}

void gen_advdiff(const ExperimentConfig& cfg) {
  const auto& a = cfg.as<AdvDiffExperimentConfig>();
  AdvDiffConfig phys;
  phys.advection = a.advection;
  phys.diffusion = a.diffusion;
  phys.x0 = a.x0;
  phys.length = a.length;
  phys.cells = a.cells;
  const Mesh1D mesh = Mesh1D::uniform(a.cells, a.length);
  const double dt_cfl = cfl_timestep(mesh, a.advection, a.diffusion);
  const double horizon = a.horizon_cfl_steps * dt_cfl;
  Json manifest;
  manifest["experiment"] = to_string(cfg.kind);
  manifest["seed"] = cfg.seed;
  manifest["dt_cfl"] = dt_cfl;
  Json files = Json::array();
  for (double ratio : a.dt_ratios) {
    const double dt = ratio * dt_cfl;
    const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
    for (ModelKind kind : {ModelKind::fdm, ModelKind::fvm}) {
      const std::vector<double> times{a.train_time, a.train_time + dt, a.train_time + static_cast<double>(steps) * dt};
      std::vector<Eigen::VectorXd> states;
      for (double t : times) states.push_back(advdiff_state(mesh, kind, t, phys));
      const std::string name = "analytic_" + to_string(kind) + "_r" + label(ratio) + ".csv";
      write_trajectory_csv(cfg.output_dir / name, times, states);
      files.push_back({{"file", name}, {"dt_ratio", ratio}, {"hash", file_hash(cfg.output_dir / name)}});
    }
  }
  manifest["files"] = files;
  write_json(cfg.output_dir / "manifest.json", manifest);
}

// ------------------------------------------------------------------ brownian

BrownianConfig particle_config(const BrownianExperimentConfig& b, std::uint64_t seed) {
  BrownianConfig c;
  c.particles = b.particles;
  c.cells = b.cells;
  c.diffusivity = b.diffusivity;
  c.lx = b.lx;
  c.ly = b.ly;
  c.dt = b.dt;
  c.seed = derive_seed(seed, kParticleStream);
  return c;
}

ExperimentResult run_brownian(const ExperimentConfig& cfg) {
  const auto& b = cfg.as<BrownianExperimentConfig>();
  const BrownianConfig pc = particle_config(b, cfg.seed);
  std::set<std::size_t> rec{0, b.window_start, b.window_end, b.rollout_steps};
  const std::vector<std::size_t> steps(rec.begin(), rec.end());
  const auto snaps = simulate_brownian(pc, steps);
  auto at = [&](std::size_t step) {
    return density_histogram(snaps[std::find(steps.begin(), steps.end(), step) - steps.begin()], b.cells, b.lx);
  };
  const Eigen::VectorXd hist0 = at(0);
  const Eigen::VectorXd f0 = gaussian_filter(hist0, b.filter_sigma_cells);
  const Eigen::VectorXd fa = gaussian_filter(at(b.window_start), b.filter_sigma_cells);
  const Eigen::VectorXd fb = gaussian_filter(at(b.window_end), b.filter_sigma_cells);
  const Eigen::VectorXd hist_final = at(b.rollout_steps);
  const Eigen::VectorXd f_final = gaussian_filter(hist_final, b.filter_sigma_cells);

  const Mesh1D mesh = Mesh1D::uniform(b.cells, b.lx);
  TimeModelOptions o;
  o.kind = ModelKind::fvm;
  o.boundary = Boundary::periodic;
  o.order = b.fvm.order;
  o.epsilon = b.fvm.epsilon_cells * b.lx / static_cast<double>(b.cells);
  o.kernel_power = b.fvm.kernel_power;
  o.dt = static_cast<double>(b.window_end - b.window_start) * b.dt;
  TimeModel model(mesh, o);
  // increment (rho(end) - rho(start)) / ((end - start) dt)
  const std::vector<IncrementPair> pairs{{fa, fb}};
  const auto history = train_time_model(model, pairs, b.train);
  TimeModel direct(mesh, o);
  direct.set_xi(fit_time_model_least_squares(direct, pairs));
  const double ls_loss = evaluate(direct.network(), increment_dataset(direct, pairs), residual_objective(direct));

  model.set_dt(b.dt);
  const Eigen::VectorXd u0 = b.filtered_initial ? f0 : hist0;
  const auto traj = rollout(model, u0, b.rollout_steps);
  TimeModel diffusion = TimeModel::exact(mesh, o, 0.0, b.diffusivity);
  diffusion.set_dt(b.dt);
  const Eigen::VectorXd diff_final = rollout(diffusion, u0, b.rollout_steps).back();

  const Eigen::VectorXd mu = model.norm_weights();
  const double mass0 = mu.dot(u0);
  const double mass_drift = std::abs(mu.dot(traj.back()) - mass0) / std::abs(mass0);
  const double rel = (traj.back() - f_final).norm() / f_final.norm();

  Json m;
  m["particles"] = b.particles;
  m["cells"] = b.cells;
  m["final_time"] = static_cast<double>(b.rollout_steps) * b.dt;
  m["training"] = history_json(history);
  m["least_squares_loss"] = number(ls_loss);
  m["xi"] = vector_json(model.xi());
  m["exact_diffusion_xi"] = vector_json(diffusion.xi());
  m["final_relative_l2"] = number(rel);
  m["exact_diffusion_final_relative_l2"] = number((diff_final - f_final).norm() / f_final.norm());
  m["raw_histogram_final_relative_l2"] = number((traj.back() - hist_final).norm() / hist_final.norm());
  m["relative_mass_drift"] = number(mass_drift);

  Field f(b.cells, 7);
  f << hist0, fa, fb, hist_final, f_final, traj.back(), diff_final;
  PointCloud xs(1, mesh.centers());
  write_field_csv(cfg.output_dir / "density.csv", xs, f,
                  {"histogram_0", "filtered_start", "filtered_end", "histogram_final", "filtered_final", "model_final",
                   "diffusion_final"});
  std::vector<double> times;
  for (std::size_t k = 0; k < traj.size(); ++k) times.push_back(static_cast<double>(k) * b.dt);
  write_trajectory_csv(cfg.output_dir / "rollout.csv", times, traj);

  Json meta;
  meta["experiment"] = to_string(cfg.kind);
  meta["seed"] = cfg.seed;
  meta["model"] = "fvm";
  meta["dt"] = b.dt;
  save_checkpoint(cfg.output_dir / "checkpoint.json", model.network(), meta);
  return finish(cfg, m,
                {upper_check("final_relative_l2", rel, b.max_final_relative_l2),
                 upper_check("relative_mass_drift", mass_drift, 1e-10)});
}

void gen_brownian(const ExperimentConfig& cfg) {
  const auto& b = cfg.as<BrownianExperimentConfig>();
  const BrownianConfig pc = particle_config(b, cfg.seed);
  std::vector<std::size_t> steps(b.rollout_steps + 1);
  for (std::size_t k = 0; k <= b.rollout_steps; ++k) steps[k] = k;
  const auto snaps = simulate_brownian(pc, steps);
  std::vector<double> times;
  std::vector<Eigen::VectorXd> raw, filtered;
  for (std::size_t k = 0; k < steps.size(); ++k) {
    times.push_back(static_cast<double>(steps[k]) * b.dt);
    raw.push_back(density_histogram(snaps[k], b.cells, b.lx));
    filtered.push_back(gaussian_filter(raw.back(), b.filter_sigma_cells));
  }
  write_trajectory_csv(cfg.output_dir / "histogram.csv", times, raw);
  write_trajectory_csv(cfg.output_dir / "filtered.csv", times, filtered);
  Json manifest;
  manifest["experiment"] = to_string(cfg.kind);
  manifest["seed"] = cfg.seed;
  manifest["particle_seed"] = pc.seed;
  manifest["files"] = Json::array({{{"file", "histogram.csv"}, {"hash", file_hash(cfg.output_dir / "histogram.csv")}},
                                   {{"file", "filtered.csv"}, {"hash", file_hash(cfg.output_dir / "filtered.csv")}}});
  write_json(cfg.output_dir / "manifest.json", manifest);
}

Dataset read_bundle_split(const std::filesystem::path& dir, const Json& manifest, const char* split, bool scalar_label) {
  Dataset d;
  for (const Json& e : manifest.at(split)) {
    const CsvTable t = read_csv(dir / e.at("file").get<std::string>());
    auto column = [&](const std::string& name) {
      const auto it = std::find(t.header.begin(), t.header.end(), name);
      if (it == t.header.end()) throw Error("bundle file lacks column '" + name + "'");
      const std::size_t c = static_cast<std::size_t>(it - t.header.begin());
      Eigen::VectorXd v(t.rows.size());
      for (std::size_t i = 0; i < t.rows.size(); ++i) v[i] = t.rows[i][c];
      return v;
    };
    if (scalar_label) {
      d.add(Field(column("input")), Field::Constant(1, 1, e.at("label").get<double>()));
    } else {
      d.add(Field(column("input")), Field(column("target")));
    }
  }
  return d;
}

}  // namespace

RegressGeometry regress_geometry(const RegressConfig& cfg, std::uint64_t seed) {
  const RegressCase& c = cfg.active();
  RegressGeometry g;
  g.spacing = 1.0 / static_cast<double>(c.nodes_per_axis);
  std::size_t total = c.nodes_per_axis;
  if (cfg.dim == 2) total *= c.nodes_per_axis;
  g.cloud = std::make_shared<const PointCloud>(
      c.random_layout ? random_cloud(cfg.dim, total, 1.0, derive_seed(seed, kCloudStream), true)
                      : uniform_grid(cfg.dim, c.nodes_per_axis, 1.0, true));
  return g;
}

Dataset regress_dataset(const RegressConfig& cfg, const PointCloud& cloud, std::uint64_t seed,
                        std::size_t first_index, std::size_t count) {
  const SpectralOp op = regress_op(cfg);
  std::vector<Field> inputs(count), targets(count);
  parallel_for(count, [&](std::size_t s) {
    const SpectralField f = regress_field(cfg, seed, first_index + s);
    inputs[s] = f.sample(cloud);
    targets[s] = apply_spectral_operator(f, op, cloud, cfg.burgers_viscosity);
  });
  Dataset d;
  for (std::size_t s = 0; s < count; ++s) d.add(std::move(inputs[s]), std::move(targets[s]));
  return d;
}

double field_energy(const SpectralField& field) {
  double e = 0.0;
  for (const auto& mode : field.modes()) {
    const bool zero = mode.k[0] == 0 && mode.k[1] == 0;
    e += (zero ? 1.0 : 2.0) * std::norm(mode.xi);
  }
  return e * std::pow(field.length(), field.dim());
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.output_dir);
  switch (cfg.kind) {
    case ExperimentKind::regress_operator: return run_regress(cfg);
    case ExperimentKind::advdiff: return run_advdiff(cfg);
    case ExperimentKind::brownian: return run_brownian(cfg);
    case ExperimentKind::qoi: return run_qoi(cfg);
  }
  throw Error("unknown experiment");
}

void generate_data(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.output_dir);
  switch (cfg.kind) {
    case ExperimentKind::regress_operator: gen_regress(cfg); break;
    case ExperimentKind::advdiff: gen_advdiff(cfg); break;
    case ExperimentKind::brownian: gen_brownian(cfg); break;
    case ExperimentKind::qoi: gen_qoi(cfg); break;
  }
  const std::filesystem::path mpath = cfg.output_dir / "manifest.json";
  Json manifest = read_json(mpath);
  Json jc;
  jc["file"] = cfg.source.filename().string();
  jc["hash"] = std::filesystem::is_regular_file(cfg.source) ? Json(file_hash(cfg.source)) : Json(nullptr);
  manifest["config"] = jc;
  write_json(mpath, manifest);
}

Json evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const std::string tag = ck.metadata.value("experiment", "");
  if (tag != "regress-operator" && tag != "qoi")
    throw Error("eval supports regress-operator and qoi checkpoints, not '" + tag + "'");
  const bool qoi = tag == "qoi";
  const PointCloud& cloud = std::get<GMLSLayer>(ck.network.stages().front()).source();
  Dataset test;
  if (!data_dir.empty()) {
    const Json manifest = read_json(data_dir / "manifest.json");
    if (manifest.value("experiment", "") != tag) throw Error("data bundle does not belong to a " + tag + " run");
    test = read_bundle_split(data_dir, manifest, "test", qoi);
  } else {
    const auto seed = ck.metadata.at("seed").get<std::uint64_t>();
    const auto ntrain = ck.metadata.at("train_samples").get<std::size_t>();
    const auto ntest = ck.metadata.at("test_samples").get<std::size_t>();
    if (qoi) {
      QoiExperimentConfig q;
      q.dim = ck.metadata.at("dim").get<int>();
      q.max_wavenumber = ck.metadata.at("max_wavenumber").get<int>();
      q.alpha1 = ck.metadata.at("alpha1").get<double>();
      test = qoi_dataset(q, cloud, seed, ntrain, ntest);
    } else {
      test = regress_dataset(regress_from_metadata(ck.metadata), cloud, seed, ntrain, ntest);
    }
  }
  Json j;
  j["experiment"] = tag;
  j["checkpoint"] = checkpoint.filename().string();
  j["metrics"] = qoi ? qoi_eval_metrics(ck.network, test) : regress_eval_metrics(ck.network, test);
  return j;
}

}  // namespace gmls
