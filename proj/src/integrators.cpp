#include "gmlsnet/integrators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gmlsnet/error.hpp"

namespace gmls {

Mesh1D::Mesh1D(std::vector<double> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.size() < 2) throw Error("mesh needs at least two nodes");
  for (std::size_t i = 0; i + 1 < nodes_.size(); ++i)
    if (!(nodes_[i + 1] > nodes_[i])) throw Error("mesh nodes must be strictly increasing");
}

Mesh1D Mesh1D::uniform(std::size_t cells, double length) {
  if (cells == 0 || !(length > 0.0)) throw Error("uniform mesh needs cells > 0 and length > 0");
  std::vector<double> n(cells + 1);
  for (std::size_t i = 0; i <= cells; ++i) n[i] = length * static_cast<double>(i) / static_cast<double>(cells);
  return Mesh1D(std::move(n));
}

std::vector<double> Mesh1D::centers() const {
  std::vector<double> c(cells());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = 0.5 * (nodes_[i] + nodes_[i + 1]);
  return c;
}

double Mesh1D::min_spacing() const {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cells(); ++i) m = std::min(m, measure(i));
  return m;
}

double cfl_timestep(double dx, double advection, double diffusion) {
  if (!(dx > 0.0) || advection < 0.0 || diffusion < 0.0) throw Error("cfl_timestep needs dx > 0, a >= 0, nu >= 0");
  double dt = std::numeric_limits<double>::infinity();
  if (advection > 0.0) dt = std::min(dt, 0.5 * dx / advection);
  if (diffusion > 0.0) dt = std::min(dt, 0.25 * dx * dx / diffusion);
  if (!std::isfinite(dt)) throw Error("cfl_timestep needs a positive advection or diffusion rate");
  return dt;
}

double cfl_timestep(const Mesh1D& mesh, double advection, double diffusion) {
  return cfl_timestep(mesh.min_spacing(), advection, diffusion);
}

std::string to_string(ModelKind k) { return k == ModelKind::fdm ? "fdm" : "fvm"; }

std::string to_string(Boundary b) {
  switch (b) {
    case Boundary::periodic: return "periodic";
    case Boundary::dirichlet: return "dirichlet";
    case Boundary::zero_flux: return "zero_flux";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "fdm") return ModelKind::fdm;
  if (s == "fvm") return ModelKind::fvm;
  throw Error("unknown model kind '" + s + "'");
}

Boundary boundary_from_string(const std::string& s) {
  if (s == "periodic") return Boundary::periodic;
  if (s == "dirichlet") return Boundary::dirichlet;
  if (s == "zero_flux") return Boundary::zero_flux;
  throw Error("unknown boundary rule '" + s + "'");
}

TimeModel::TimeModel(const Mesh1D& mesh, const TimeModelOptions& options) : mesh_(mesh), options_(options) {
  if (options_.order < 0) options_.order = options_.kind == ModelKind::fdm ? 3 : 4;
  if (!(options_.epsilon > 0.0)) throw Error("time model needs a positive epsilon");
  if (!(options_.dt > 0.0)) throw Error("time model needs a positive dt");
  const bool periodic = options_.boundary == Boundary::periodic;
  const double len = mesh_.length();
  const double x0 = mesh_.nodes().front();
  const std::optional<Coord> period = periodic ? std::optional<Coord>(Coord{len, 0.0}) : std::nullopt;
  const std::size_t nc = mesh_.cells();
  auto cloud = [&](std::vector<double> xs) {
    for (double& v : xs) v -= x0;
    return std::make_shared<const PointCloud>(1, std::move(xs), period);
  };

  std::vector<double> state_x, out_x;
  if (options_.kind == ModelKind::fdm) {
    if (options_.boundary == Boundary::zero_flux) throw Error("fdm models support periodic or dirichlet boundaries");
    state_x.assign(mesh_.nodes().begin(), mesh_.nodes().end() - (periodic ? 1 : 0));
    out_x = state_x;
    const std::size_t n = state_x.size();
    out_to_rate_ = Eigen::MatrixXd::Identity(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!periodic && (i == 0 || i + 1 == n)) {
        out_to_rate_(i, i) = 0.0;
      } else {
        active_.push_back(i);
      }
    }
  } else {
    if (options_.boundary == Boundary::dirichlet) throw Error("fvm models support periodic or zero_flux boundaries");
    state_x = mesh_.centers();
    // periodic: faces x_0..x_{N-1}, cell i between faces i and i+1 mod N
    // zero_flux: interior faces x_1..x_{N-1}; boundary fluxes are zero
    if (periodic) {
      out_x.assign(mesh_.nodes().begin(), mesh_.nodes().end() - 1);
    } else {
      out_x.assign(mesh_.nodes().begin() + 1, mesh_.nodes().end() - 1);
    }
    out_to_rate_ = Eigen::MatrixXd::Zero(nc, out_x.size());
    for (std::size_t i = 0; i < nc; ++i) {
      const double inv = 1.0 / mesh_.measure(i);
      if (periodic) {
        out_to_rate_(i, (i + 1) % nc) += inv;
        out_to_rate_(i, i) -= inv;
      } else {
        if (i + 1 < nc) out_to_rate_(i, i) += inv;  // right face x_{i+1} is output i
        if (i > 0) out_to_rate_(i, i - 1) -= inv;   // left face x_i is output i-1
      }
      active_.push_back(i);
    }
  }
  state_ = cloud(std::move(state_x));
  output_ = cloud(std::move(out_x));
  const WeightKernel kernel{options_.epsilon, options_.kernel_power};
  const MonomialBasis basis(1, options_.order, options_.epsilon);
  auto enc = std::make_shared<const CoefficientEncoder>(state_, output_, kernel, basis);
  FunctionalMap map = FunctionalMap::linear(1, basis.size());
  map.parameters()[0].value.setZero();
  net_.add(GMLSLayer(enc, 1, std::move(map)));
}

TimeModel TimeModel::exact(const Mesh1D& mesh, const TimeModelOptions& options, double velocity,
                           double diffusion) {
  TimeModel m(mesh, options);
  const MonomialBasis& b = m.layer().encoder().basis();
  Eigen::VectorXd xi;
  if (m.kind() == ModelKind::fdm) {
    xi = -velocity * apply_operator_to_basis(b, TargetOperator::d_dx()) +
         diffusion * apply_operator_to_basis(b, TargetOperator::d2_dx2());
  } else {
    // flux_advdiff gives a u + nu u_x; the physical flux has a = -velocity
    xi = apply_operator_to_basis(b, TargetOperator::flux(-velocity, diffusion));
  }
  m.set_xi(xi);
  return m;
}

void TimeModel::set_dt(double dt) {
  if (!(dt > 0.0)) throw Error("dt must be positive");
  options_.dt = dt;
}

const GMLSLayer& TimeModel::layer() const { return std::get<GMLSLayer>(net_.stages().front()); }

Eigen::VectorXd TimeModel::xi() const { return layer().map().weight(0).row(0).transpose(); }

void TimeModel::set_xi(const Eigen::VectorXd& xi) {
  auto params = net_.parameters();
  if (xi.size() != params[0].value->cols()) throw Error("xi has the wrong length");
  params[0].value->row(0) = xi.transpose();
  invalidate();
}

Eigen::VectorXd TimeModel::layer_output(const Eigen::VectorXd& u) const {
  if (static_cast<std::size_t>(u.size()) != state_size()) throw Error("state vector has the wrong size");
  return layer().forward(Field(u)).col(0);
}

Eigen::VectorXd TimeModel::rate(const Eigen::VectorXd& u) const { return out_to_rate_ * layer_output(u); }

Eigen::MatrixXd TimeModel::output_to_rate() const { return out_to_rate_; }

Eigen::MatrixXd TimeModel::operator_matrix() const { return out_to_rate_ * export_stencil(layer()).to_dense(); }

Eigen::VectorXd TimeModel::norm_weights() const {
  const std::size_t n = state_size();
  Eigen::VectorXd w(n);
  if (kind() == ModelKind::fvm) {
    for (std::size_t i = 0; i < n; ++i) w[i] = mesh_.measure(i);
    return w;
  }
  const auto& x = mesh_.nodes();
  const std::size_t nc = mesh_.cells();
  for (std::size_t i = 0; i < n; ++i) {
    const double left = i > 0 ? x[i] - x[i - 1] : (boundary() == Boundary::periodic ? mesh_.measure(nc - 1) : 0.0);
    const double right = i < nc ? x[i + 1] - x[i] : 0.0;
    w[i] = 0.5 * (left + right);
  }
  return w;
}

Eigen::VectorXd TimeModel::implicit_step(const Eigen::VectorXd& u_n) const {
  if (static_cast<std::size_t>(u_n.size()) != state_size()) throw Error("state vector has the wrong size");
  const std::size_t n = state_size();
  if (!lu_ || lu_generation_ != net_.generation() || lu_dt_ != options_.dt) {
    Eigen::MatrixXd sys = Eigen::MatrixXd::Identity(n, n) - options_.dt * operator_matrix();
    auto lu = std::make_shared<Eigen::PartialPivLU<Eigen::MatrixXd>>(sys);
    const double rc = lu->rcond();
    if (!(rc > 1e-14)) throw Error("implicit system is singular (rcond estimate " + std::to_string(rc) + ")");
    lu_ = std::move(lu);
    lu_generation_ = net_.generation();
    lu_dt_ = options_.dt;
  }
  Eigen::VectorXd rhs = u_n;
  if (kind() == ModelKind::fdm && boundary() == Boundary::dirichlet) {
    rhs[0] = options_.dirichlet_left;
    rhs[n - 1] = options_.dirichlet_right;
  }
  return lu_->solve(rhs);
}

Eigen::VectorXd fdm_residual(const TimeModel& model, const Eigen::VectorXd& u_n, const Eigen::VectorXd& u_np1) {
  if (model.kind() != ModelKind::fdm) throw Error("fdm_residual needs an fdm model");
  return residual(model, u_n, u_np1);
}

Eigen::VectorXd fvm_residual(const TimeModel& model, const Eigen::VectorXd& u_n, const Eigen::VectorXd& u_np1) {
  if (model.kind() != ModelKind::fvm) throw Error("fvm_residual needs an fvm model");
  return residual(model, u_n, u_np1);
}

Eigen::VectorXd residual(const TimeModel& model, const Eigen::VectorXd& u_n, const Eigen::VectorXd& u_np1) {
  if (u_n.size() != u_np1.size() || static_cast<std::size_t>(u_n.size()) != model.state_size())
    throw Error("residual: state shape mismatch");
  Eigen::VectorXd r = (u_np1 - u_n) / model.dt() - model.rate(u_np1);
  for (std::size_t i = 0; i < model.state_size(); ++i)
    if (std::find(model.active_rows().begin(), model.active_rows().end(), i) == model.active_rows().end()) r[i] = 0.0;
  return r;
}

Eigen::VectorXd implicit_step(const TimeModel& model, const Eigen::VectorXd& u_n) { return model.implicit_step(u_n); }

std::vector<Eigen::VectorXd> rollout(const TimeModel& model, const Eigen::VectorXd& u0, std::size_t n_steps) {
  std::vector<Eigen::VectorXd> traj{u0};
  traj.reserve(n_steps + 1);
  for (std::size_t s = 0; s < n_steps; ++s) {
    traj.push_back(model.implicit_step(traj.back()));
    if (!traj.back().allFinite()) throw Error("rollout produced non-finite values at step " + std::to_string(s + 1));
  }
  return traj;
}

double l2_error(const Eigen::VectorXd& u, const Eigen::VectorXd& ref, const Eigen::VectorXd& weights) {
  if (u.size() != ref.size() || u.size() != weights.size()) throw Error("l2_error: size mismatch");
  return std::sqrt((weights.array() * (u - ref).array().square()).sum());
}

Dataset increment_dataset(const TimeModel& model, const std::vector<IncrementPair>& pairs) {
  Dataset d;
  for (const auto& [un, unp1] : pairs) {
    if (static_cast<std::size_t>(un.size()) != model.state_size() || un.size() != unp1.size())
      throw Error("increment pair has the wrong size");
    d.add(Field(unp1), Field((unp1 - un) / model.dt()));
  }
  return d;
}

Objective residual_objective(const TimeModel& model) {
  const Eigen::MatrixXd d = model.output_to_rate();
  const std::vector<std::size_t> rows = model.active_rows();
  return [d, rows](const Field& pred, const Field& target) {
    const Eigen::VectorXd rate = d * pred.col(0);
    Eigen::VectorXd diff = Eigen::VectorXd::Zero(rate.size());
    for (std::size_t i : rows) diff[i] = rate[i] - target(i, 0);
    const double n = static_cast<double>(rows.size());
    LossValue out;
    out.value = diff.squaredNorm() / n;
    out.cotangent = Field(d.transpose() * ((2.0 / n) * diff));
    return out;
  };
}

std::vector<EpochRecord> train_time_model(TimeModel& model, const std::vector<IncrementPair>& pairs,
                                          const TrainConfig& config) {
  const Dataset data = increment_dataset(model, pairs);
  auto history = train(model.network(), data, nullptr, config, residual_objective(model));
  return history;
}

Eigen::VectorXd fit_time_model_least_squares(const TimeModel& model, const std::vector<IncrementPair>& pairs) {
  const std::size_t q = model.layer().q();
  const auto& rows = model.active_rows();
  const Eigen::MatrixXd d = model.output_to_rate();
  const CoefficientEncoder& enc = model.layer().encoder();
  Eigen::MatrixXd b(rows.size() * pairs.size(), q);
  Eigen::VectorXd rhs(rows.size() * pairs.size());
  std::size_t r0 = 0;
  for (const auto& [un, unp1] : pairs) {
    // rate = D A^T xi where column i of A^T-form holds target i's coefficients
    const CoefficientField a = enc.encode(Field(unp1));
    const Eigen::MatrixXd coeff = a.as_matrix().transpose();  // outputs x q
    const Eigen::MatrixXd rate_per_xi = d * coeff;            // states x q
    const Eigen::VectorXd target = (unp1 - un) / model.dt();
    for (std::size_t k = 0; k < rows.size(); ++k) {
      b.row(r0 + k) = rate_per_xi.row(rows[k]);
      rhs[r0 + k] = target[rows[k]];
    }
    r0 += rows.size();
  }
  return Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(b).solve(rhs);
}

}  // namespace gmls
