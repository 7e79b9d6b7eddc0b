#include "gmlsnet/estimator.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "gmlsnet/error.hpp"
#include "gmlsnet/parallel.hpp"
#include "gmlsnet/simd.hpp"

namespace gmls {

LocalProblem assemble_local(const PointCloud& source, const PointCloud& target,
                            const NeighborList& neighbors, const WeightKernel& kernel,
                            const MonomialBasis& basis, std::size_t i, const Field* values) {
  const auto& list = neighbors[i];
  if (list.empty()) throw EmptyNeighborhoodError(i);
  const std::size_t n = list.size();
  const std::size_t q = basis.size();
  LocalProblem p;
  p.target = i;
  p.neighbors.resize(n);
  p.weights.resize(n);
  p.design.resize(n, q);
  RowMatrix m = RowMatrix::Zero(q, q);
  std::vector<double> phi(q);
  const auto& k = simd::active();
  const auto xi = target.point(i);
  for (std::size_t j = 0; j < n; ++j) {
    const auto idx = list[j].index;
    const Coord off = source.displacement(xi, source.point(idx));
    basis.eval_offset({off.data(), static_cast<std::size_t>(basis.dim())}, phi);
    const double w = kernel(list[j].distance);
    p.neighbors[j] = idx;
    p.weights[j] = w;
    for (std::size_t a = 0; a < q; ++a) p.design(j, a) = phi[a];
    k.weighted_outer_accumulate(w, phi.data(), m.data(), q);
  }
  // fused multiply-adds differ by operand order; keep M exactly symmetric
  p.normal = m;
  p.normal.triangularView<Eigen::StrictlyLower>() = p.normal.transpose();
  if (values != nullptr) {
    const Field& u = *values;
    p.moments.resize(q, u.cols());
    for (Eigen::Index c = 0; c < u.cols(); ++c) {
      Eigen::VectorXd local(n);
      for (std::size_t j = 0; j < n; ++j) local[j] = u(p.neighbors[j], c);
      p.moments.col(c) = p.design.transpose() * (p.weights.asDiagonal() * local);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(p.normal, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  p.condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  return p;
}

LocalSolution factor_local(const LocalProblem& problem, const SolverOptions& options) {
  const std::size_t n = problem.neighbors.size();
  const std::size_t q = static_cast<std::size_t>(problem.design.cols());
  if (n < q) throw UnisolvencyError(problem.target, n, "fewer neighbors than basis terms");

  const Eigen::VectorXd sw = problem.weights.cwiseSqrt();
  const Eigen::MatrixXd b = sw.asDiagonal() * problem.design;

  LocalSolution sol;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(b);
  const auto r = qr.matrixR().topLeftCorner(q, q).diagonal().cwiseAbs();
  const double rmax = r.maxCoeff();
  sol.rcond = rmax > 0.0 ? r.minCoeff() / rmax : 0.0;
  if (sol.rcond >= options.qr_rcond) {
    // P = B^+ diag(sqrt w)
    sol.coefficient_operator = qr.solve(Eigen::MatrixXd(sw.asDiagonal()));
    return sol;
  }

  Eigen::BDCSVD<Eigen::MatrixXd> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double smax = s.size() ? s[0] : 0.0;
  Eigen::Index rank = 0;
  for (Eigen::Index k = 0; k < s.size(); ++k)
    if (s[k] > options.svd_cutoff * smax) ++rank;
  if (rank < static_cast<Eigen::Index>(q))
    throw UnisolvencyError(problem.target, n,
                           "numerical rank " + std::to_string(rank) + " < " + std::to_string(q));
  const double lambda = options.ridge_scale * s.squaredNorm() / static_cast<double>(q);
  Eigen::VectorXd filt(s.size());
  for (Eigen::Index k = 0; k < s.size(); ++k) filt[k] = s[k] / (s[k] * s[k] + lambda);
  const Eigen::MatrixXd pinv = svd.matrixV() * filt.asDiagonal() * svd.matrixU().transpose();
  sol.coefficient_operator = pinv * sw.asDiagonal();
  sol.ridge = lambda;
  sol.used_fallback = true;
  return sol;
}

Eigen::VectorXd solve_coefficients(const LocalProblem& problem, const Eigen::VectorXd& local_values,
                                   const SolverOptions& options) {
  if (local_values.size() != static_cast<Eigen::Index>(problem.neighbors.size()))
    throw Error("value count does not match neighbor count");
  return factor_local(problem, options).coefficient_operator * local_values;
}

Eigen::VectorXd solve_normal_equations(const LocalProblem& problem,
                                       const Eigen::VectorXd& local_values, double ridge) {
  const Eigen::Index q = problem.design.cols();
  const Eigen::VectorXd rhs = problem.design.transpose() * (problem.weights.asDiagonal() * local_values);
  const Eigen::MatrixXd m = problem.normal + ridge * Eigen::MatrixXd::Identity(q, q);
  return m.ldlt().solve(rhs);
}

double apply_known_functional(const Eigen::VectorXd& coefficients, const Eigen::VectorXd& tau) {
  if (coefficients.size() != tau.size()) throw Error("functional length does not match basis size");
  return coefficients.dot(tau);
}

Eigen::VectorXd StencilMatrix::apply(const Eigen::VectorXd& u) const {
  if (static_cast<std::size_t>(u.size()) != cols) throw Error("stencil column mismatch");
  const auto& k = simd::active();
  Eigen::VectorXd out(rows);
  for (std::size_t i = 0; i < rows; ++i)
    out[i] = k.gather_dot(values.data() + row_ptr[i], u.data(), col_idx.data() + row_ptr[i],
                          row_ptr[i + 1] - row_ptr[i]);
  return out;
}

Eigen::VectorXd StencilMatrix::apply_transpose(const Eigen::VectorXd& g) const {
  if (static_cast<std::size_t>(g.size()) != rows) throw Error("stencil row mismatch");
  const auto& k = simd::active();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(cols);
  for (std::size_t i = 0; i < rows; ++i)
    k.scatter_axpy(g[i], values.data() + row_ptr[i], col_idx.data() + row_ptr[i], out.data(),
                   row_ptr[i + 1] - row_ptr[i]);
  return out;
}

double StencilMatrix::row_sum(std::size_t i) const {
  double s = 0.0;
  for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += values[k];
  return s;
}

Eigen::MatrixXd StencilMatrix::to_dense() const {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) d(i, col_idx[k]) += values[k];
  return d;
}

namespace {

void fnv(std::uint64_t& h, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) {
    h ^= (v >> (8 * b)) & 0xffu;
    h *= 1099511628211ull;
  }
}

void fnv(std::uint64_t& h, double v) { fnv(h, std::bit_cast<std::uint64_t>(v)); }

void hash_cloud(std::uint64_t& h, const PointCloud& c) {
  fnv(h, static_cast<std::uint64_t>(c.dim()));
  for (double v : c.coords()) fnv(h, v);
  if (c.period())
    for (double v : *c.period()) fnv(h, v);
}

}  // namespace

std::uint64_t geometry_hash(const PointCloud& source, const PointCloud& target,
                            const WeightKernel& kernel, const MonomialBasis& basis) {
  std::uint64_t h = 1469598103934665603ull;
  hash_cloud(h, source);
  hash_cloud(h, target);
  fnv(h, kernel.epsilon);
  fnv(h, static_cast<std::uint64_t>(kernel.power));
  fnv(h, static_cast<std::uint64_t>(basis.dim()));
  fnv(h, static_cast<std::uint64_t>(basis.order()));
  fnv(h, basis.scale());
  return h;
}

CoefficientEncoder::CoefficientEncoder(std::shared_ptr<const PointCloud> source,
                                       std::shared_ptr<const PointCloud> target,
                                       WeightKernel kernel, MonomialBasis basis,
                                       SolverOptions options, NeighborSearch search)
    : source_(std::move(source)),
      target_(std::move(target)),
      kernel_(kernel),
      basis_(std::move(basis)),
      options_(options) {
  if (source_->dim() != basis_.dim()) throw Error("basis dimension does not match cloud");
  neighbors_ = build_neighbors(*source_, *target_, kernel_.epsilon, search);
  factor_all();
}

CoefficientEncoder::CoefficientEncoder(std::shared_ptr<const PointCloud> source,
                                       std::shared_ptr<const PointCloud> target,
                                       WeightKernel kernel, MonomialBasis basis,
                                       const NeighborList& topology, SolverOptions options)
    : source_(std::move(source)),
      target_(std::move(target)),
      kernel_(kernel),
      basis_(std::move(basis)),
      options_(options) {
  if (source_->dim() != basis_.dim()) throw Error("basis dimension does not match cloud");
  if (topology.target_count() != target_->size()) throw Error("topology does not match target cloud");
  std::vector<std::vector<Neighbor>> lists(target_->size());
  for (std::size_t i = 0; i < lists.size(); ++i) {
    for (const auto& n : topology[i]) {
      if (n.index >= source_->size()) throw Error("topology references a missing source point");
      lists[i].push_back({n.index, source_->distance(target_->point(i), source_->point(n.index))});
    }
  }
  neighbors_ = NeighborList(kernel_.epsilon, std::move(lists));
  factor_all();
}

void CoefficientEncoder::factor_all() {
  const std::size_t nt = target_->size();
  indices_.resize(nt);
  solutions_.resize(nt);
  parallel_for(nt, [&](std::size_t i) {
    const LocalProblem p = assemble_local(*source_, *target_, neighbors_, kernel_, basis_, i);
    solutions_[i] = factor_local(p, options_);
    indices_[i] = p.neighbors;
  });
  provenance_ = geometry_hash(*source_, *target_, kernel_, basis_);
}

LocalProblem CoefficientEncoder::problem(std::size_t i) const {
  return assemble_local(*source_, *target_, neighbors_, kernel_, basis_, i);
}

void CoefficientEncoder::encode_target(std::size_t i, const double* values, double* out) const {
  const auto& idx = indices_[i];
  const RowMatrix& p = solutions_[i].coefficient_operator;
  const std::size_t n = idx.size();
  const auto& k = simd::active();
  for (std::size_t a = 0; a < q(); ++a)
    out[a] = k.gather_dot(p.data() + a * n, values, idx.data(), n);
}

void CoefficientEncoder::encode_target_transpose(std::size_t i, const double* dcoeff,
                                                 double* dvalues) const {
  const auto& idx = indices_[i];
  const RowMatrix& p = solutions_[i].coefficient_operator;
  const std::size_t n = idx.size();
  const auto& k = simd::active();
  for (std::size_t a = 0; a < q(); ++a)
    if (dcoeff[a] != 0.0) k.scatter_axpy(dcoeff[a], p.data() + a * n, idx.data(), dvalues, n);
}

CoefficientField CoefficientEncoder::encode(const Field& values) const {
  if (static_cast<std::size_t>(values.rows()) != source_->size())
    throw Error("field rows do not match source cloud size");
  CoefficientField cf;
  cf.targets = targets();
  cf.channels = static_cast<std::size_t>(values.cols());
  cf.q = q();
  cf.dim = basis_.dim();
  cf.order = basis_.order();
  cf.provenance = provenance_;
  cf.data.assign(cf.targets * cf.channels * cf.q, 0.0);
  parallel_for(cf.targets, [&](std::size_t i) {
    for (std::size_t c = 0; c < cf.channels; ++c)
      encode_target(i, values.col(static_cast<Eigen::Index>(c)).data(), &cf.at(i, c, 0));
  });
  for (double v : cf.data)
    if (!std::isfinite(v)) throw Error("non-finite coefficient while encoding field");
  return cf;
}

StencilMatrix CoefficientEncoder::stencil(const Eigen::VectorXd& xi) const {
  if (static_cast<std::size_t>(xi.size()) != q()) throw Error("functional length does not match basis");
  StencilMatrix s;
  s.rows = targets();
  s.cols = source_->size();
  for (std::size_t i = 0; i < s.rows; ++i) {
    const RowMatrix& p = solutions_[i].coefficient_operator;
    const Eigen::VectorXd c = p.transpose() * xi;
    for (std::size_t j = 0; j < indices_[i].size(); ++j) {
      s.col_idx.push_back(indices_[i][j]);
      s.values.push_back(c[j]);
    }
    s.row_ptr.push_back(s.col_idx.size());
  }
  return s;
}

DifferencedStencil to_differenced(const StencilMatrix& stencil) {
  if (stencil.rows != stencil.cols) throw Error("differenced stencils need source == target");
  DifferencedStencil d;
  d.offsets = stencil;
  d.diagonal.resize(stencil.rows);
  for (std::size_t i = 0; i < stencil.rows; ++i) d.diagonal[i] = stencil.row_sum(i);
  return d;
}

Eigen::VectorXd apply(const DifferencedStencil& s, const Eigen::VectorXd& u) {
  const StencilMatrix& m = s.offsets;
  Eigen::VectorXd out(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) {
    double acc = 0.0;
    for (std::size_t k = m.row_ptr[i]; k < m.row_ptr[i + 1]; ++k)
      acc += m.values[k] * (u[m.col_idx[k]] - u[i]);
    out[i] = acc + s.diagonal[i] * u[i];
  }
  return out;
}

}  // namespace gmls
