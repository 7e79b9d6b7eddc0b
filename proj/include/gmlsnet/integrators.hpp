#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gmlsnet/network.hpp"
#include "gmlsnet/training.hpp"

namespace gmls {

/// Strictly increasing nodes x_0 < ... < x_N; cell i = [x_i, x_{i+1}].
class Mesh1D {
 public:
  explicit Mesh1D(std::vector<double> nodes);
  static Mesh1D uniform(std::size_t cells, double length);

  const std::vector<double>& nodes() const noexcept { return nodes_; }
  std::size_t cells() const noexcept { return nodes_.size() - 1; }
  double length() const noexcept { return nodes_.back() - nodes_.front(); }
  double measure(std::size_t i) const { return nodes_[i + 1] - nodes_[i]; }
  std::vector<double> centers() const;
  double min_spacing() const;

 private:
  std::vector<double> nodes_;
};

/// min(dx / (2a), dx^2 / (4 nu)); a zero rate drops its bound.
double cfl_timestep(double dx, double advection, double diffusion);
double cfl_timestep(const Mesh1D& mesh, double advection, double diffusion);

enum class ModelKind { fdm, fvm };
enum class Boundary { periodic, dirichlet, zero_flux };
std::string to_string(ModelKind k);
std::string to_string(Boundary b);
ModelKind model_kind_from_string(const std::string& s);
Boundary boundary_from_string(const std::string& s);

struct TimeModelOptions {
  ModelKind kind = ModelKind::fdm;
  /// fdm: periodic or dirichlet. fvm: periodic or zero_flux.
  Boundary boundary = Boundary::periodic;
  int order = -1;          // -1: cubic for fdm, quartic for fvm
  double epsilon = 0.0;    // support radius in coordinate units
  int kernel_power = 4;
  double dt = 0.0;
  double dirichlet_left = 0.0;
  double dirichlet_right = 0.0;
};

/// Implicit-Euler model (u^{n+1} - u^n) / dt = L[u^{n+1}; xi] with a single
/// linear GMLS layer. fdm: the layer maps node values to node rates. fvm: the
/// layer maps cell averages (sampled at centers) to face fluxes G and
/// L_i = (G_{i+1} - G_i) / mu_i.
class TimeModel {
 public:
  TimeModel(const Mesh1D& mesh, const TimeModelOptions& options);

  /// Layer xi set to the exact operator: fdm  -v u_x + nu u_xx, fvm  G = -v u + nu u_x.
  static TimeModel exact(const Mesh1D& mesh, const TimeModelOptions& options, double velocity,
                         double diffusion);

  ModelKind kind() const noexcept { return options_.kind; }
  Boundary boundary() const noexcept { return options_.boundary; }
  const TimeModelOptions& options() const noexcept { return options_; }
  const Mesh1D& mesh() const noexcept { return mesh_; }
  double dt() const noexcept { return options_.dt; }
  void set_dt(double dt);

  /// Sites of the state vector (nodes or cell centers) and of the layer outputs.
  const PointCloud& state_cloud() const { return *state_; }
  const PointCloud& output_cloud() const { return *output_; }
  std::size_t state_size() const { return state_->size(); }

  const Network& network() const noexcept { return net_; }
  Network& network() noexcept { return net_; }
  const GMLSLayer& layer() const;
  Eigen::VectorXd xi() const;
  void set_xi(const Eigen::VectorXd& xi);

  /// Raw layer output at output sites.
  Eigen::VectorXd layer_output(const Eigen::VectorXd& u) const;
  /// L[u]: rates per state entry (zero on Dirichlet nodes).
  Eigen::VectorXd rate(const Eigen::VectorXd& u) const;
  /// Maps layer outputs to rates: identity (masked) for fdm, flux difference for fvm.
  Eigen::MatrixXd output_to_rate() const;
  /// Dense A with rate(u) = A u.
  Eigen::MatrixXd operator_matrix() const;

  /// Rows that carry dynamics (all except Dirichlet nodes).
  const std::vector<std::size_t>& active_rows() const noexcept { return active_; }
  /// Quadrature weights of the discrete l2 norm: trapezoid (fdm) or cell measures (fvm).
  Eigen::VectorXd norm_weights() const;

  Eigen::VectorXd implicit_step(const Eigen::VectorXd& u_n) const;

 private:
  void invalidate() const { lu_.reset(); }

  Mesh1D mesh_;
  TimeModelOptions options_;
  std::shared_ptr<const PointCloud> state_;
  std::shared_ptr<const PointCloud> output_;
  Network net_;
  std::vector<std::size_t> active_;
  Eigen::MatrixXd out_to_rate_;
  mutable std::shared_ptr<Eigen::PartialPivLU<Eigen::MatrixXd>> lu_;
  mutable std::uint64_t lu_generation_ = 0;
  mutable double lu_dt_ = 0.0;
};

/// (u_np1 - u_n)/dt - L[u_np1], fdm models only.
Eigen::VectorXd fdm_residual(const TimeModel& model, const Eigen::VectorXd& u_n,
                             const Eigen::VectorXd& u_np1);
/// (u_np1 - u_n)/dt - (G_{i+1} - G_i)/mu_i, fvm models only.
Eigen::VectorXd fvm_residual(const TimeModel& model, const Eigen::VectorXd& u_n,
                             const Eigen::VectorXd& u_np1);
/// Dispatches on the model kind.
Eigen::VectorXd residual(const TimeModel& model, const Eigen::VectorXd& u_n, const Eigen::VectorXd& u_np1);

Eigen::VectorXd implicit_step(const TimeModel& model, const Eigen::VectorXd& u_n);
/// States u_0 .. u_n (n + 1 entries).
std::vector<Eigen::VectorXd> rollout(const TimeModel& model, const Eigen::VectorXd& u0, std::size_t n_steps);

/// sqrt(sum_i w_i (u_i - ref_i)^2).
double l2_error(const Eigen::VectorXd& u, const Eigen::VectorXd& ref, const Eigen::VectorXd& weights);

using IncrementPair = std::pair<Eigen::VectorXd, Eigen::VectorXd>;  // (u_n, u_np1)

/// Samples with input u_np1 and target (u_np1 - u_n)/dt.
Dataset increment_dataset(const TimeModel& model, const std::vector<IncrementPair>& pairs);
/// Per-sample MSE of the residual over active rows, given the layer output as prediction.
Objective residual_objective(const TimeModel& model);
/// Gradient training of xi on the residual.
std::vector<EpochRecord> train_time_model(TimeModel& model, const std::vector<IncrementPair>& pairs,
                                          const TrainConfig& config);
/// Minimum-norm least-squares xi for the residual (complete orthogonal decomposition).
Eigen::VectorXd fit_time_model_least_squares(const TimeModel& model, const std::vector<IncrementPair>& pairs);

}  // namespace gmls
