#include "gmlsnet/layer.hpp"

#include <cmath>

#include "gmlsnet/error.hpp"
#include "gmlsnet/parallel.hpp"

namespace gmls {

GMLSLayer::GMLSLayer(std::shared_ptr<const CoefficientEncoder> encoder, std::size_t in_channels,
                     FunctionalMap map)
    : GMLSLayer(std::vector{std::move(encoder)}, std::vector<std::size_t>(in_channels, 0),
                std::move(map)) {}

GMLSLayer::GMLSLayer(std::vector<std::shared_ptr<const CoefficientEncoder>> encoders,
                     std::vector<std::size_t> binding, FunctionalMap map)
    : encoders_(std::move(encoders)), binding_(std::move(binding)), map_(std::move(map)) {
  if (encoders_.empty() || binding_.empty()) throw Error("GMLS layer needs at least one channel");
  const auto& front = *encoders_.front();
  for (const auto& e : encoders_) {
    if (!e->target().same_geometry(front.target()))
      throw Error("all channel encoders must share the target cloud");
    if (e->q() != front.q()) throw Error("all channel encoders must share the basis size");
  }
  for (std::size_t b : binding_)
    if (b >= encoders_.size()) throw Error("channel bound to a missing encoder");
  if (map_.in_width() != binding_.size() * front.q())
    throw Error("functional map width " + std::to_string(map_.in_width()) +
                " != channels * Q = " + std::to_string(binding_.size() * front.q()));
}

CoefficientField GMLSLayer::encode(const Field& input) const {
  if (static_cast<std::size_t>(input.cols()) != in_channels())
    throw Error("layer expects " + std::to_string(in_channels()) + " channels, got " +
                std::to_string(input.cols()));
  if (shared_source()) return encoders_.front()->encode(input);
  std::vector<Eigen::VectorXd> ch;
  for (Eigen::Index c = 0; c < input.cols(); ++c) ch.emplace_back(input.col(c));
  return encode(ch);
}

CoefficientField GMLSLayer::encode(const std::vector<Eigen::VectorXd>& channels) const {
  if (channels.size() != in_channels()) throw Error("channel count mismatch");
  for (std::size_t c = 0; c < channels.size(); ++c)
    if (static_cast<std::size_t>(channels[c].size()) != encoder(c).source().size())
      throw Error("channel " + std::to_string(c) + " length does not match its source cloud");
  const auto& front = *encoders_.front();
  CoefficientField cf;
  cf.targets = front.targets();
  cf.channels = in_channels();
  cf.q = front.q();
  cf.dim = front.basis().dim();
  cf.order = front.basis().order();
  cf.provenance = front.provenance();
  cf.data.assign(cf.targets * cf.channels * cf.q, 0.0);
  parallel_for(cf.targets, [&](std::size_t i) {
    for (std::size_t c = 0; c < cf.channels; ++c)
      encoder(c).encode_target(i, channels[c].data(), &cf.at(i, c, 0));
  });
  return cf;
}

Field GMLSLayer::apply_map(const CoefficientField& coefficients, LayerTape* tape) const {
  Field out = map_.apply(coefficients.as_matrix(), tape ? &tape->map_cache : nullptr).transpose();
  if (tape) tape->coefficients = coefficients;
  return out;
}

Field GMLSLayer::forward(const Field& input, LayerTape* tape) const {
  return apply_map(encode(input), tape);
}

Field GMLSLayer::forward(const std::vector<Eigen::VectorXd>& channels, LayerTape* tape) const {
  return apply_map(encode(channels), tape);
}

StencilMatrix export_stencil(const GMLSLayer& layer, std::size_t out_channel,
                             std::size_t in_channel) {
  if (!layer.map().is_linear()) throw Error("stencils exist only for linear functional maps");
  if (out_channel >= layer.out_channels() || in_channel >= layer.in_channels())
    throw Error("stencil channel out of range");
  const std::size_t q = layer.q();
  const Eigen::VectorXd xi =
      layer.map().weight(0).row(out_channel).segment(in_channel * q, q).transpose();
  return layer.encoder(in_channel).stencil(xi);
}

PoolingLayer::PoolingLayer(Reducer reducer, std::shared_ptr<const PointCloud> source,
                           std::shared_ptr<const PointCloud> target, double epsilon)
    : reducer_(reducer), source_(std::move(source)), target_(std::move(target)) {
  neighbors_ = build_neighbors(*source_, *target_, epsilon, NeighborSearch::grid);
}

Field PoolingLayer::forward(const Field& input, PoolTape* tape) const {
  if (static_cast<std::size_t>(input.rows()) != source_->size())
    throw Error("pooling input rows do not match source cloud");
  const Eigen::Index channels = input.cols();
  Field out(target_->size(), channels);
  if (tape) {
    tape->channels = static_cast<std::size_t>(channels);
    tape->argmax.assign(reducer_ == Reducer::max ? target_->size() * channels : 0, 0);
  }
  for (std::size_t i = 0; i < target_->size(); ++i) {
    const auto& nb = neighbors_[i];
    if (nb.empty()) throw EmptyNeighborhoodError(i);
    for (Eigen::Index c = 0; c < channels; ++c) {
      if (reducer_ == Reducer::mean) {
        double s = 0.0;
        for (const auto& n : nb) s += input(n.index, c);
        out(i, c) = s / static_cast<double>(nb.size());
      } else {
        // neighbors are sorted by index, so a strict > keeps the lowest index on ties
        std::uint32_t best = nb.front().index;
        double v = input(best, c);
        for (const auto& n : nb)
          if (input(n.index, c) > v) {
            v = input(n.index, c);
            best = n.index;
          }
        out(i, c) = v;
        if (tape) tape->argmax[i * channels + c] = best;
      }
    }
  }
  return out;
}

Field PoolingLayer::backward(const PoolTape& tape, const Field& upstream) const {
  const Eigen::Index channels = upstream.cols();
  Field d = Field::Zero(source_->size(), channels);
  for (std::size_t i = 0; i < target_->size(); ++i) {
    const auto& nb = neighbors_[i];
    for (Eigen::Index c = 0; c < channels; ++c) {
      if (reducer_ == Reducer::max) {
        d(tape.argmax[i * channels + c], c) += upstream(i, c);
      } else {
        const double share = upstream(i, c) / static_cast<double>(nb.size());
        for (const auto& n : nb) d(n.index, c) += share;
      }
    }
  }
  return d;
}

}  // namespace gmls
