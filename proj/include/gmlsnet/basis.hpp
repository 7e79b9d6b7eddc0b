#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gmlsnet/point_cloud.hpp"

namespace gmls {

using MultiIndex = std::array<int, kMaxDim>;

/// Monomials of total degree <= order in `dim` variables, shifted to a center
/// and scaled by `scale`: phi_alpha(x) = prod_k ((x - c)_k / scale)^alpha_k.
/// Terms are in graded-lexicographic order: 1, x, y, x^2, xy, y^2, ...
class MonomialBasis {
 public:
  MonomialBasis() = default;
  MonomialBasis(int dim, int order, double scale = 1.0);

  int dim() const noexcept { return dim_; }
  int order() const noexcept { return order_; }
  double scale() const noexcept { return scale_; }
  std::size_t size() const noexcept { return terms_.size(); }
  const std::vector<MultiIndex>& terms() const noexcept { return terms_; }
  /// Position of a multi-index in the term list, or size() when absent.
  std::size_t index_of(const MultiIndex& alpha) const;

  /// Values at displacement `offset = x - center`; `out` has size() entries.
  void eval_offset(std::span<const double> offset, std::span<double> out) const;
  /// Derivative of each term with respect to the center, `out` is size() x dim.
  void eval_offset_center_gradient(std::span<const double> offset, Eigen::Ref<Eigen::MatrixXd> out) const;

  Eigen::VectorXd eval(std::span<const double> x, std::span<const double> center) const;
  Eigen::MatrixXd eval_gradient(std::span<const double> x, std::span<const double> center) const;

  friend bool operator==(const MonomialBasis& a, const MonomialBasis& b) {
    return a.dim_ == b.dim_ && a.order_ == b.order_ && a.scale_ == b.scale_;
  }

 private:
  int dim_ = 1;
  int order_ = 0;
  double scale_ = 1.0;
  std::vector<MultiIndex> terms_;
};

/// `C(order + dim, dim)`.
std::size_t basis_size(int dim, int order);

enum class DiffOp { identity, d_dx, d2_dx2, laplacian_2d, flux_advdiff };

/// A known linear target functional evaluated at the basis center.
/// For flux_advdiff the functional is `advection * u + diffusion * du/dx`.
struct TargetOperator {
  DiffOp kind = DiffOp::identity;
  double advection = 0.0;
  double diffusion = 0.0;

  static TargetOperator identity() { return {DiffOp::identity}; }
  static TargetOperator d_dx() { return {DiffOp::d_dx}; }
  static TargetOperator d2_dx2() { return {DiffOp::d2_dx2}; }
  static TargetOperator laplacian() { return {DiffOp::laplacian_2d}; }
  static TargetOperator flux(double advection, double diffusion) {
    return {DiffOp::flux_advdiff, advection, diffusion};
  }
};

/// tau(Phi) at the center: the exact action of the operator on each basis term.
Eigen::VectorXd apply_operator_to_basis(const MonomialBasis& basis, const TargetOperator& op);

std::string to_string(DiffOp op);
DiffOp diff_op_from_string(const std::string& name);

}  // namespace gmls
