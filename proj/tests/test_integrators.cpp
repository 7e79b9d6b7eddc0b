#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "gmlsnet/datagen.hpp"
#include "gmlsnet/error.hpp"
#include "gmlsnet/integrators.hpp"

using namespace gmls;

namespace {

TimeModelOptions opts(ModelKind kind, Boundary b, double eps, double dt) {
  TimeModelOptions o;
  o.kind = kind;
  o.boundary = b;
  o.epsilon = eps;
  o.dt = dt;
  return o;
}

}  // namespace

TEST_CASE("cfl timestep") {
  CHECK(cfl_timestep(0.1, 1.0, 0.0) == doctest::Approx(0.05));
  CHECK(cfl_timestep(0.1, 0.0, 0.1) == doctest::Approx(0.025));
  CHECK(cfl_timestep(0.3, 1.0, 0.05) == doctest::Approx(0.15));
  CHECK(cfl_timestep(0.3, 1.0, 0.5) == doctest::Approx(0.045));
  CHECK_THROWS_AS(cfl_timestep(0.1, 0.0, 0.0), Error);
  CHECK(cfl_timestep(Mesh1D({0.0, 0.1, 0.3}), 1.0, 0.0) == doctest::Approx(0.05));
  CHECK_THROWS_AS(Mesh1D({0.0, 0.2, 0.1}), Error);
}

TEST_CASE("exact fdm operator differentiates smooth data") {
  const Mesh1D mesh = Mesh1D::uniform(64, 1.0);
  const double h = 1.0 / 64;
  TimeModel m = TimeModel::exact(mesh, opts(ModelKind::fdm, Boundary::periodic, 3.5 * h, 0.01), 0.7, 0.02);
  const double w = 2 * std::numbers::pi;
  Eigen::VectorXd u(m.state_size()), ref(m.state_size());
  for (std::size_t i = 0; i < m.state_size(); ++i) {
    const double x = m.state_cloud().coord(i, 0);
    u[i] = std::sin(w * x);
    ref[i] = -0.7 * w * std::cos(w * x) - 0.02 * w * w * std::sin(w * x);
  }
  CHECK((m.rate(u) - ref).cwiseAbs().maxCoeff() <= 1e-3 * ref.cwiseAbs().maxCoeff());
  CHECK((m.operator_matrix() * u - m.rate(u)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("residual vanishes for the implicit step and scales with the rate") {
  const Mesh1D mesh = Mesh1D::uniform(40, 4.0);
  for (ModelKind kind : {ModelKind::fdm, ModelKind::fvm}) {
    TimeModel m = TimeModel::exact(mesh, opts(kind, Boundary::periodic, 0.35, 0.05), 1.0, 0.05);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    Eigen::VectorXd u(m.state_size());
    for (auto& v : u) v = n(rng);
    const Eigen::VectorXd up = m.implicit_step(u);
    CHECK(residual(m, u, up).cwiseAbs().maxCoeff() <= 1e-10 * u.cwiseAbs().maxCoeff() / m.dt());
    // a constant state has zero rate
    const Eigen::VectorXd c = Eigen::VectorXd::Constant(m.state_size(), 2.0);
    CHECK(residual(m, c, c).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(residual(m, 0.0 * c, c).cwiseAbs().maxCoeff() == doctest::Approx(2.0 / 0.05).epsilon(1e-9));
  }
}

TEST_CASE("implicit euler amplification factor") {
  // pure diffusion, one Fourier mode on a periodic fdm grid: |g| = 1 / (1 + dt nu lambda_h) < 1
  const std::size_t n = 64;
  const double h = 1.0 / n;
  TimeModel m = TimeModel::exact(Mesh1D::uniform(n, 1.0), opts(ModelKind::fdm, Boundary::periodic, 3.5 * h, 0.01), 0.0, 0.1);
  Eigen::VectorXd u(n);
  const double w = 2 * std::numbers::pi * 3;
  for (std::size_t i = 0; i < n; ++i) u[i] = std::cos(w * m.state_cloud().coord(i, 0));
  const Eigen::VectorXd gu = m.implicit_step(u);
  const double g = gu.dot(u) / u.dot(u);
  // discrete symbol of the operator on this mode
  const double lambda = -m.rate(u).dot(u) / u.dot(u);
  CHECK(lambda == doctest::Approx(0.1 * w * w).epsilon(0.05));
  CHECK(g == doctest::Approx(1.0 / (1.0 + 0.01 * lambda)).epsilon(1e-10));
  CHECK(g < 1.0);
  CHECK((gu - g * u).norm() <= 1e-8 * u.norm());
}

TEST_CASE("finite volume conserves mass") {
  const Mesh1D mesh = Mesh1D::uniform(60, 30.0);
  for (Boundary b : {Boundary::periodic, Boundary::zero_flux}) {
    TimeModel m = TimeModel::exact(mesh, opts(ModelKind::fvm, b, 2.1, 0.25), 1.0, 0.05);
    AdvDiffConfig cfg;
    Eigen::VectorXd u(60);
    for (std::size_t i = 0; i < 60; ++i) u[i] = advdiff_cell_average(mesh.nodes()[i], mesh.nodes()[i + 1], 1.0, cfg);
    const Eigen::VectorXd mu = m.norm_weights();
    const double mass0 = mu.dot(u);
    const auto traj = rollout(m, u, 100);
    CHECK(traj.size() == 101);
    CHECK(std::abs(mu.dot(traj.back()) - mass0) <= 1e-12 * std::abs(mass0));
  }
}

TEST_CASE("dirichlet nodes are held fixed") {
  TimeModelOptions o = opts(ModelKind::fdm, Boundary::dirichlet, 0.35, 0.1);
  o.dirichlet_left = 0.25;
  o.dirichlet_right = -1.0;
  TimeModel m = TimeModel::exact(Mesh1D::uniform(30, 3.0), o, 1.0, 0.05);
  CHECK(m.state_size() == 31);
  CHECK(m.active_rows().size() == 29);
  Eigen::VectorXd u = Eigen::VectorXd::LinSpaced(31, 0.0, 1.0);
  const Eigen::VectorXd up = m.implicit_step(u);
  CHECK(up[0] == doctest::Approx(0.25));
  CHECK(up[30] == doctest::Approx(-1.0));
  CHECK_THROWS_AS(TimeModel(Mesh1D::uniform(30, 3.0), opts(ModelKind::fvm, Boundary::dirichlet, 0.35, 0.1)), Error);
}

TEST_CASE("rollout bookkeeping") {
  TimeModel m = TimeModel::exact(Mesh1D::uniform(20, 1.0), opts(ModelKind::fdm, Boundary::periodic, 0.18, 0.01), 1.0, 0.01);
  Eigen::VectorXd u = Eigen::VectorXd::Random(20);
  const auto traj = rollout(m, u, 0);
  CHECK(traj.size() == 1);
  CHECK(l2_error(traj[0], u, m.norm_weights()) == 0.0);
  CHECK(m.norm_weights().sum() == doctest::Approx(1.0));
  Eigen::VectorXd a = m.implicit_step(u);
  CHECK(implicit_step(m, u) == a);
  m.set_dt(0.02);
  CHECK((m.implicit_step(u) - a).norm() > 1e-6);
}

TEST_CASE("least-squares fit recovers the generating operator") {
  const Mesh1D mesh = Mesh1D::uniform(40, 4.0);
  for (ModelKind kind : {ModelKind::fdm, ModelKind::fvm}) {
    const TimeModelOptions o = opts(kind, Boundary::periodic, 0.35, 0.05);
    TimeModel truth = TimeModel::exact(mesh, o, 0.8, 0.07);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n;
    std::vector<IncrementPair> pairs;
    for (int s = 0; s < 10; ++s) {
      Eigen::VectorXd u(truth.state_size());
      for (auto& v : u) v = n(rng);
      pairs.emplace_back(u, truth.implicit_step(u));
    }
    TimeModel learner(mesh, o);
    const Eigen::VectorXd xi = fit_time_model_least_squares(learner, pairs);
    learner.set_xi(xi);
    for (const auto& [un, unp1] : pairs) CHECK(residual(learner, un, unp1).cwiseAbs().maxCoeff() <= 1e-8 / o.dt);
    CHECK((learner.operator_matrix() - truth.operator_matrix()).norm() <= 1e-7 * truth.operator_matrix().norm());
  }
}

TEST_CASE("gradient training lowers the residual") {
  const Mesh1D mesh = Mesh1D::uniform(40, 4.0);
  const TimeModelOptions o = opts(ModelKind::fdm, Boundary::periodic, 0.35, 0.05);
  TimeModel truth = TimeModel::exact(mesh, o, 0.8, 0.07);
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n;
  std::vector<IncrementPair> pairs;
  for (int s = 0; s < 8; ++s) {
    Eigen::VectorXd u(truth.state_size());
    for (auto& v : u) v = n(rng);
    pairs.emplace_back(u, truth.implicit_step(u));
  }
  TimeModel learner(mesh, o);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 4;
  cfg.optimizer = {OptimizerKind::adam, 0.02};
  const auto hist = train_time_model(learner, pairs, cfg);
  CHECK(hist.back().train_loss < 1e-2 * hist.front().train_loss);
}
