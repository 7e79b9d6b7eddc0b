#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gmlsnet/basis.hpp"
#include "gmlsnet/point_cloud.hpp"

namespace gmls {

/// Sampled values: one row per point, one column per channel.
using Field = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct SolverOptions {
  /// Ridge lambda = ridge_scale * trace(M) / Q, applied on the fallback path.
  double ridge_scale = 1e-10;
  /// The QR solution is accepted when min|R_kk| / max|R_kk| >= qr_rcond.
  double qr_rcond = 1e-8;
  /// Singular values below svd_cutoff * sigma_max are discarded.
  double svd_cutoff = 1e-12;
};

/// Weighted least-squares problem about one target point.
struct LocalProblem {
  std::size_t target = 0;
  std::vector<std::uint32_t> neighbors;
  Eigen::VectorXd weights;   // w_ij per neighbor
  Eigen::MatrixXd design;    // n x Q, row j = Phi(x_j) centered at the target
  Eigen::MatrixXd normal;    // M = sum_j w_ij Phi Phi^T
  Eigen::MatrixXd moments;   // r per channel, Q x C (empty when no field given)
  double condition = 0.0;    // 2-norm condition estimate of M
};

/// Builds M (and r when `values` is given, rows indexed by source point).
LocalProblem assemble_local(const PointCloud& source, const PointCloud& target,
                            const NeighborList& neighbors, const WeightKernel& kernel,
                            const MonomialBasis& basis, std::size_t i,
                            const Field* values = nullptr);

/// a = P u_local, where P maps neighbor values to coefficients.
struct LocalSolution {
  RowMatrix coefficient_operator;  // Q x n
  double ridge = 0.0;              // lambda actually added to M
  bool used_fallback = false;
  double rcond = 0.0;
};

/// Orthogonal factorization of the sqrt(w)-scaled design; truncated-SVD fallback
/// for ill-conditioned neighborhoods. Throws UnisolvencyError.
LocalSolution factor_local(const LocalProblem& problem, const SolverOptions& options = {});

/// Coefficients for values given per neighbor (in neighbor order).
Eigen::VectorXd solve_coefficients(const LocalProblem& problem, const Eigen::VectorXd& local_values,
                                   const SolverOptions& options = {});

/// The normal-equations route (M + ridge I)^-1 r used by the analytic gradients.
Eigen::VectorXd solve_normal_equations(const LocalProblem& problem,
                                       const Eigen::VectorXd& local_values, double ridge = 0.0);

/// tau(Phi)^T a.
double apply_known_functional(const Eigen::VectorXd& coefficients, const Eigen::VectorXd& tau);

/// Coefficient vectors per target and channel, stored target-major so that the
/// concatenated per-target vector (channels * Q) is contiguous.
struct CoefficientField {
  std::size_t targets = 0;
  std::size_t channels = 0;
  std::size_t q = 0;
  int dim = 1;
  int order = 0;
  std::uint64_t provenance = 0;
  std::vector<double> data;

  double& at(std::size_t i, std::size_t c, std::size_t k) { return data[(i * channels + c) * q + k]; }
  double at(std::size_t i, std::size_t c, std::size_t k) const {
    return data[(i * channels + c) * q + k];
  }
  std::span<const double> target(std::size_t i) const {
    return {data.data() + i * channels * q, channels * q};
  }
  /// View as a (channels*Q) x targets matrix.
  Eigen::Map<const Eigen::MatrixXd> as_matrix() const {
    return {data.data(), static_cast<Eigen::Index>(channels * q), static_cast<Eigen::Index>(targets)};
  }
};

/// Sparse rows c_ij over each target's neighbor list (CSR).
struct StencilMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::uint32_t> col_idx;
  std::vector<double> values;

  Eigen::VectorXd apply(const Eigen::VectorXd& u) const;
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& g) const;
  double row_sum(std::size_t i) const;
  Eigen::MatrixXd to_dense() const;
};

/// The differenced form sum_j c_ij (u_j - u_i) + d_i u_i of the same operator.
struct DifferencedStencil {
  StencilMatrix offsets;    // c_ij multiplying (u_j - u_i)
  Eigen::VectorXd diagonal; // d_i = sum_j c_ij, multiplying u_i when source == target
};

/// Geometry cache: neighbor lists and per-target coefficient operators for a
/// (source, target, kernel, basis) tuple. Immutable after construction.
class CoefficientEncoder {
 public:
  CoefficientEncoder(std::shared_ptr<const PointCloud> source,
                     std::shared_ptr<const PointCloud> target, WeightKernel kernel,
                     MonomialBasis basis, SolverOptions options = {},
                     NeighborSearch search = NeighborSearch::grid);
  /// Reuses the index sets of `topology` (distances are recomputed), so moving
  /// points does not change neighborhood membership.
  CoefficientEncoder(std::shared_ptr<const PointCloud> source,
                     std::shared_ptr<const PointCloud> target, WeightKernel kernel,
                     MonomialBasis basis, const NeighborList& topology,
                     SolverOptions options = {});

  const PointCloud& source() const noexcept { return *source_; }
  const PointCloud& target() const noexcept { return *target_; }
  const std::shared_ptr<const PointCloud>& source_ptr() const noexcept { return source_; }
  const std::shared_ptr<const PointCloud>& target_ptr() const noexcept { return target_; }
  const WeightKernel& kernel() const noexcept { return kernel_; }
  const MonomialBasis& basis() const noexcept { return basis_; }
  const SolverOptions& options() const noexcept { return options_; }
  const NeighborList& neighbors() const noexcept { return neighbors_; }
  std::size_t targets() const noexcept { return target_->size(); }
  std::size_t q() const noexcept { return basis_.size(); }

  const std::vector<std::uint32_t>& neighbor_indices(std::size_t i) const { return indices_[i]; }
  const LocalSolution& solution(std::size_t i) const { return solutions_[i]; }
  LocalProblem problem(std::size_t i) const;

  /// Writes Q coefficients of channel `values` (one per source point) at target i.
  void encode_target(std::size_t i, const double* values, double* out) const;
  /// dvalues[j] += sum_k P_kj * dcoeff[k] over target i's neighbors.
  void encode_target_transpose(std::size_t i, const double* dcoeff, double* dvalues) const;

  CoefficientField encode(const Field& values) const;

  /// Stencil of the functional xi^T a (xi has Q entries).
  StencilMatrix stencil(const Eigen::VectorXd& xi) const;

  std::uint64_t provenance() const noexcept { return provenance_; }

 private:
  void factor_all();

  std::shared_ptr<const PointCloud> source_;
  std::shared_ptr<const PointCloud> target_;
  WeightKernel kernel_;
  MonomialBasis basis_;
  SolverOptions options_;
  NeighborList neighbors_;
  std::vector<std::vector<std::uint32_t>> indices_;
  std::vector<LocalSolution> solutions_;
  std::uint64_t provenance_ = 0;
};

/// Rewrites a point-evaluation stencil on source == target geometry into
/// differenced form. Both forms give identical results on every field.
DifferencedStencil to_differenced(const StencilMatrix& stencil);
Eigen::VectorXd apply(const DifferencedStencil& stencil, const Eigen::VectorXd& u);

/// FNV-1a hash over the geometry, kernel and basis parameters.
std::uint64_t geometry_hash(const PointCloud& source, const PointCloud& target,
                            const WeightKernel& kernel, const MonomialBasis& basis);

}  // namespace gmls
