#include "gmlsnet/basis.hpp"

#include "gmlsnet/error.hpp"

namespace gmls {

std::size_t basis_size(int dim, int order) {
  std::size_t n = 1;
  for (int k = 1; k <= dim; ++k) n = n * static_cast<std::size_t>(order + k) / k;
  return n;
}

MonomialBasis::MonomialBasis(int dim, int order, double scale)
    : dim_(dim), order_(order), scale_(scale) {
  if (dim < 1 || dim > kMaxDim) throw Error("basis dimension must be 1 or 2");
  if (order < 0) throw Error("basis order must be nonnegative");
  if (!(scale > 0.0)) throw Error("basis scale must be positive");
  for (int deg = 0; deg <= order; ++deg) {
    if (dim == 1) {
      terms_.push_back({deg, 0});
    } else {
      for (int px = deg; px >= 0; --px) terms_.push_back({px, deg - px});
    }
  }
}

std::size_t MonomialBasis::index_of(const MultiIndex& alpha) const {
  for (std::size_t k = 0; k < terms_.size(); ++k)
    if (terms_[k] == alpha) return k;
  return terms_.size();
}

namespace {

inline double ipow(double t, int e) {
  double r = 1.0;
  for (int k = 0; k < e; ++k) r *= t;
  return r;
}

}  // namespace

void MonomialBasis::eval_offset(std::span<const double> offset, std::span<double> out) const {
  const double inv = 1.0 / scale_;
  const double tx = offset[0] * inv;
  const double ty = dim_ == 2 ? offset[1] * inv : 0.0;
  for (std::size_t k = 0; k < terms_.size(); ++k) {
    const auto& a = terms_[k];
    out[k] = ipow(tx, a[0]) * (dim_ == 2 ? ipow(ty, a[1]) : 1.0);
  }
}

void MonomialBasis::eval_offset_center_gradient(std::span<const double> offset,
                                                Eigen::Ref<Eigen::MatrixXd> out) const {
  // phi depends on (x - c)/s, so d phi / d c_k = -(1/s) d phi / d t_k.
  const double inv = 1.0 / scale_;
  const double t[2] = {offset[0] * inv, dim_ == 2 ? offset[1] * inv : 0.0};
  for (std::size_t q = 0; q < terms_.size(); ++q) {
    const auto& a = terms_[q];
    for (int k = 0; k < dim_; ++k) {
      if (a[k] == 0) {
        out(q, k) = 0.0;
        continue;
      }
      double v = a[k] * ipow(t[k], a[k] - 1);
      for (int l = 0; l < dim_; ++l)
        if (l != k) v *= ipow(t[l], a[l]);
      out(q, k) = -v * inv;
    }
  }
}

Eigen::VectorXd MonomialBasis::eval(std::span<const double> x, std::span<const double> center) const {
  if (x.size() != static_cast<std::size_t>(dim_) || center.size() != static_cast<std::size_t>(dim_))
    throw Error("basis evaluation dimension mismatch");
  double off[kMaxDim] = {0.0, 0.0};
  for (int k = 0; k < dim_; ++k) off[k] = x[k] - center[k];
  Eigen::VectorXd v(size());
  eval_offset({off, static_cast<std::size_t>(dim_)}, {v.data(), size()});
  return v;
}

Eigen::MatrixXd MonomialBasis::eval_gradient(std::span<const double> x,
                                             std::span<const double> center) const {
  if (x.size() != static_cast<std::size_t>(dim_) || center.size() != static_cast<std::size_t>(dim_))
    throw Error("basis gradient dimension mismatch");
  double off[kMaxDim] = {0.0, 0.0};
  for (int k = 0; k < dim_; ++k) off[k] = x[k] - center[k];
  Eigen::MatrixXd g(size(), dim_);
  eval_offset_center_gradient({off, static_cast<std::size_t>(dim_)}, g);
  return g;
}

Eigen::VectorXd apply_operator_to_basis(const MonomialBasis& basis, const TargetOperator& op) {
  // At the center, d^beta (t^alpha) = alpha! * s^-|beta| when alpha == beta, else 0.
  Eigen::VectorXd tau = Eigen::VectorXd::Zero(basis.size());
  const double s = basis.scale();
  auto set = [&](MultiIndex alpha, double value) {
    const std::size_t k = basis.index_of(alpha);
    if (k < basis.size()) tau[k] += value;
  };
  switch (op.kind) {
    case DiffOp::identity:
      set({0, 0}, 1.0);
      break;
    case DiffOp::d_dx:
      set({1, 0}, 1.0 / s);
      break;
    case DiffOp::d2_dx2:
      set({2, 0}, 2.0 / (s * s));
      break;
    case DiffOp::laplacian_2d:
      if (basis.dim() != 2) throw Error("laplacian_2d requires a 2D basis");
      set({2, 0}, 2.0 / (s * s));
      set({0, 2}, 2.0 / (s * s));
      break;
    case DiffOp::flux_advdiff:
      if (basis.dim() != 1) throw Error("flux_advdiff requires a 1D basis");
      set({0, 0}, op.advection);
      set({1, 0}, op.diffusion / s);
      break;
  }
  return tau;
}

std::string to_string(DiffOp op) {
  switch (op) {
    case DiffOp::identity:
      return "identity";
    case DiffOp::d_dx:
      return "d_dx";
    case DiffOp::d2_dx2:
      return "d2_dx2";
    case DiffOp::laplacian_2d:
      return "laplacian_2d";
    case DiffOp::flux_advdiff:
      return "flux_advdiff";
  }
  return "identity";
}

DiffOp diff_op_from_string(const std::string& name) {
  for (DiffOp op : {DiffOp::identity, DiffOp::d_dx, DiffOp::d2_dx2, DiffOp::laplacian_2d,
                    DiffOp::flux_advdiff})
    if (to_string(op) == name) return op;
  throw Error("unknown operator '" + name + "'");
}

}  // namespace gmls
