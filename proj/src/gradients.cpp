#include "gmlsnet/gradients.hpp"

#include <cmath>

#include "gmlsnet/error.hpp"

namespace gmls {

namespace {

void check_upstream(const GMLSLayer& layer, const LayerTape& tape, const Field& upstream) {
  if (tape.coefficients.data.empty()) throw Error("layer gradient requested without a forward cache");
  if (static_cast<std::size_t>(upstream.rows()) != layer.target().size() ||
      static_cast<std::size_t>(upstream.cols()) != layer.out_channels())
    throw Error("upstream cotangent shape does not match layer output");
}

// dL/dA, (channels*Q) x targets
Eigen::MatrixXd coefficient_cotangent(const GMLSLayer& layer, const LayerTape& tape,
                                      const Field& upstream, std::vector<Eigen::MatrixXd>& grads) {
  return layer.map().backward(tape.map_cache, upstream.transpose(), grads);
}

void scatter_to_sources(const GMLSLayer& layer, const Eigen::MatrixXd& da, std::size_t channel,
                        double* dvalues) {
  const std::size_t q = layer.q();
  const auto& enc = layer.encoder(channel);
  for (std::size_t i = 0; i < enc.targets(); ++i)
    enc.encode_target_transpose(i, da.col(static_cast<Eigen::Index>(i)).data() + channel * q, dvalues);
}

}  // namespace

std::vector<Eigen::MatrixXd> grad_wrt_q(const GMLSLayer& layer, const LayerTape& tape,
                                        const Field& upstream) {
  check_upstream(layer, tape, upstream);
  std::vector<Eigen::MatrixXd> grads;
  coefficient_cotangent(layer, tape, upstream, grads);
  return grads;
}

Field grad_wrt_field(const GMLSLayer& layer, const LayerTape& tape, const Field& upstream) {
  if (!layer.shared_source()) throw Error("grad_wrt_field needs a shared-source layer; use grad_wrt_channels");
  check_upstream(layer, tape, upstream);
  std::vector<Eigen::MatrixXd> scratch;
  const Eigen::MatrixXd da = coefficient_cotangent(layer, tape, upstream, scratch);
  Field du = Field::Zero(layer.source().size(), layer.in_channels());
  for (std::size_t c = 0; c < layer.in_channels(); ++c)
    scatter_to_sources(layer, da, c, du.col(static_cast<Eigen::Index>(c)).data());
  return du;
}

std::vector<Eigen::VectorXd> grad_wrt_channels(const GMLSLayer& layer, const LayerTape& tape,
                                               const Field& upstream) {
  check_upstream(layer, tape, upstream);
  std::vector<Eigen::MatrixXd> scratch;
  const Eigen::MatrixXd da = coefficient_cotangent(layer, tape, upstream, scratch);
  std::vector<Eigen::VectorXd> out;
  for (std::size_t c = 0; c < layer.in_channels(); ++c) {
    out.push_back(Eigen::VectorXd::Zero(layer.source(c).size()));
    scatter_to_sources(layer, da, c, out.back().data());
  }
  return out;
}

PositionGradient grad_wrt_positions(const GMLSLayer& layer, const Field& input,
                                    const Field& upstream) {
  if (!layer.shared_source()) throw Error("position gradients need a shared-source layer");
  const CoefficientEncoder& enc = layer.encoder();
  const WeightKernel& kernel = enc.kernel();
  if (kernel.power < 2) throw Error("position gradients need a kernel power >= 2");
  const PointCloud& src = enc.source();
  const PointCloud& tgt = enc.target();
  const int dim = src.dim();
  const std::size_t q = enc.q();
  const std::size_t channels = layer.in_channels();
  if (static_cast<std::size_t>(input.cols()) != channels || static_cast<std::size_t>(input.rows()) != src.size())
    throw Error("input field shape does not match layer");
  if (static_cast<std::size_t>(upstream.rows()) != tgt.size() ||
      static_cast<std::size_t>(upstream.cols()) != layer.out_channels())
    throw Error("upstream cotangent shape does not match layer output");

  PositionGradient g{Eigen::MatrixXd::Zero(tgt.size(), dim), Eigen::MatrixXd::Zero(src.size(), dim)};
  Eigen::MatrixXd dphi(q, dim);
  for (std::size_t i = 0; i < tgt.size(); ++i) {
    const LocalProblem p = enc.problem(i);
    for (const auto& n : enc.neighbors()[i])
      if (std::abs(n.distance - kernel.epsilon) <= 1e-12 * kernel.epsilon)
        throw Error("neighbor " + std::to_string(n.index) + " of target " + std::to_string(i) +
                    " lies on the kernel support boundary");
    const std::size_t nn = p.neighbors.size();
    // a_c = M^-1 r_c, matching the cached operator (same ridge when the fallback was used)
    const double ridge = enc.solution(i).ridge;
    const Eigen::MatrixXd m = p.normal + ridge * Eigen::MatrixXd::Identity(q, q);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(m);

    Eigen::MatrixXd a(q, channels);
    Eigen::MatrixXd local(nn, channels);
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t j = 0; j < nn; ++j) local(j, c) = input(p.neighbors[j], c);
      a.col(c) = ldlt.solve(p.design.transpose() * (p.weights.asDiagonal() * local.col(c)));
    }
    // v = J_q^T g_i, then adjoint z = M^-1 v per channel
    Eigen::VectorXd flat(q * channels);
    for (std::size_t c = 0; c < channels; ++c) flat.segment(c * q, q) = a.col(c);
    const Eigen::VectorXd v = layer.map().jacobian(flat).transpose() * upstream.row(i).transpose();
    Eigen::MatrixXd z(q, channels);
    for (std::size_t c = 0; c < channels; ++c) z.col(c) = ldlt.solve(v.segment(c * q, q));

    const auto xi = tgt.point(i);
    for (std::size_t j = 0; j < nn; ++j) {
      const std::uint32_t sj = p.neighbors[j];
      const Coord off = src.displacement(xi, src.point(sj));
      enc.basis().eval_offset_center_gradient({off.data(), static_cast<std::size_t>(dim)}, dphi);
      const Eigen::VectorXd phi = p.design.row(j).transpose();
      const double w = p.weights[j];
      const double r = enc.neighbors()[i][j].distance;
      const double dwdr = kernel.derivative(r);
      for (int k = 0; k < dim; ++k) {
        // r = |x_j - x_i|, dr/dx_i = -(x_j - x_i)/r; zero at r = 0 by symmetry
        const double dw = r > 0.0 ? dwdr * (-off[k] / r) : 0.0;
        double contrib = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          const double resid = local(j, c) - phi.dot(a.col(c));
          const double zphi = z.col(c).dot(phi);
          const double zdphi = z.col(c).dot(dphi.col(k));
          const double dphia = dphi.col(k).dot(a.col(c));
          // z^T (dr/dx - dM/dx a) for this pair
          contrib += zdphi * resid * w + zphi * resid * dw - zphi * dphia * w;
        }
        g.target(i, k) += contrib;
        g.source(sj, k) -= contrib;
      }
    }
  }
  return g;
}

void NetworkGradients::clear() {
  for (auto& v : values) v.setZero();
  if (input.size()) input.setZero();
}

void NetworkGradients::accumulate(const NetworkGradients& other) {
  if (values.empty()) {
    *this = other;
    return;
  }
  for (std::size_t k = 0; k < values.size(); ++k) values[k] += other.values[k];
  if (input.size() && other.input.size()) input += other.input;
}

void NetworkGradients::scale(double s) {
  for (auto& v : values) v *= s;
  if (input.size()) input *= s;
}

const Eigen::MatrixXd& NetworkGradients::operator[](const std::string& id) const {
  for (std::size_t k = 0; k < ids.size(); ++k)
    if (ids[k] == id) return values[k];
  throw Error("no gradient for parameter '" + id + "'");
}

NetworkGradients network_backward(const Network& net, const Tape& tape, const Field& upstream,
                                  bool input_gradient) {
  if (tape.owner != &net || tape.generation != net.generation() ||
      tape.stages.size() != net.stages().size())
    throw Error("stale tape: the network changed after the forward pass");
  const auto& stages = net.stages();
  std::vector<std::vector<Eigen::MatrixXd>> per_stage(stages.size());
  Field d = upstream;
  for (std::size_t s = stages.size(); s-- > 0;) {
    const Stage& stage = stages[s];
    const StageTape& st = tape.stages[s];
    if (const auto* l = std::get_if<GMLSLayer>(&stage)) {
      const auto& lt = std::get<LayerTape>(st);
      check_upstream(*l, lt, d);
      const Eigen::MatrixXd da = coefficient_cotangent(*l, lt, d, per_stage[s]);
      if (s == 0 && (!input_gradient || !l->shared_source())) {
        d = Field();
        break;
      }
      Field du = Field::Zero(l->source().size(), l->in_channels());
      for (std::size_t c = 0; c < l->in_channels(); ++c)
        scatter_to_sources(*l, da, c, du.col(static_cast<Eigen::Index>(c)).data());
      d = std::move(du);
    } else if (const auto* p = std::get_if<PoolingLayer>(&stage)) {
      d = p->backward(std::get<PoolTape>(st), d);
    } else if (const auto* a = std::get_if<ActivationStage>(&stage)) {
      if (a->activation == Activation::relu) {
        const auto& in = std::get<ActivationTape>(st).input;
        d = d.cwiseProduct((in.array() > 0.0).cast<double>().matrix());
      }
    } else if (std::holds_alternative<MeanReadout>(stage)) {
      const Eigen::Index rows = std::get<ReadoutTape>(st).rows;
      Field e = d.replicate(rows, 1) / static_cast<double>(rows);
      d = std::move(e);
    } else if (const auto* h = std::get_if<AffineHead>(&stage)) {
      const auto& in = std::get<HeadTape>(st).input;
      per_stage[s] = {d.transpose() * in, Eigen::MatrixXd(d.colwise().sum().transpose())};
      d = d * h->weight.value;
    }
  }
  NetworkGradients out;
  for (const auto& ref : net.parameters()) out.ids.push_back(ref.id);
  for (std::size_t s = 0; s < stages.size(); ++s)
    for (auto& g : per_stage[s]) out.values.push_back(std::move(g));
  if (out.values.size() != out.ids.size()) throw Error("internal: gradient/parameter count mismatch");
  out.input = std::move(d);
  return out;
}

}  // namespace gmls
