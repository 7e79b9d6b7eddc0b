#include "gmlsnet/network.hpp"

#include <random>

#include "gmlsnet/error.hpp"

namespace gmls {

std::string stage_kind(const Stage& stage) {
  struct V {
    std::string operator()(const GMLSLayer&) const { return "gmls"; }
    std::string operator()(const PoolingLayer&) const { return "pool"; }
    std::string operator()(const ActivationStage&) const { return "activation"; }
    std::string operator()(const MeanReadout&) const { return "mean_readout"; }
    std::string operator()(const AffineHead&) const { return "affine_head"; }
  };
  return std::visit(V{}, stage);
}

void Network::check_points(std::size_t points, const std::string& what) const {
  if (stages_.empty()) return;
  if (!cloud_valid_) throw Error(what + " cannot follow a readout stage");
  if (points != points_)
    throw Error(what + " expects " + std::to_string(points) + " input points but the previous stage produces " +
                std::to_string(points_));
}

void Network::add(GMLSLayer layer) {
  if (!layer.shared_source()) {
    if (!stages_.empty()) throw Error("per-channel sampling sites are only allowed in the first stage");
  } else {
    check_points(layer.source().size(), "GMLS layer");
    if (!stages_.empty() && cloud_ && !cloud_->same_geometry(layer.source()))
      throw Error("GMLS layer source cloud differs from the previous stage's cloud");
  }
  if (!stages_.empty() && layer.in_channels() != channels_)
    throw Error("GMLS layer expects " + std::to_string(layer.in_channels()) +
                " channels, previous stage gives " + std::to_string(channels_));
  if (stages_.empty()) {
    input_channels_ = layer.in_channels();
    input_points_ = layer.shared_source() ? layer.source().size() : 0;
  }
  channels_ = layer.out_channels();
  points_ = layer.target().size();
  cloud_ = layer.target_ptr();
  stages_.emplace_back(std::move(layer));
  ++generation_;
}

void Network::add(PoolingLayer pool) {
  check_points(pool.source().size(), "pooling layer");
  if (stages_.empty()) throw Error("pooling cannot be the first stage");
  if (cloud_ && !cloud_->same_geometry(pool.source()))
    throw Error("pooling source cloud differs from the previous stage's cloud");
  points_ = pool.target().size();
  cloud_ = pool.target_ptr();
  stages_.emplace_back(std::move(pool));
  ++generation_;
}

void Network::add_activation(Activation activation) {
  if (stages_.empty()) throw Error("activation cannot be the first stage");
  stages_.emplace_back(ActivationStage{activation});
  ++generation_;
}

void Network::add_mean_readout() {
  if (stages_.empty()) throw Error("readout cannot be the first stage");
  if (!cloud_valid_) throw Error("network already has a readout");
  stages_.emplace_back(MeanReadout{});
  cloud_valid_ = false;
  cloud_.reset();
  points_ = 1;
  ++generation_;
}

void Network::add_affine_head(std::size_t out, std::uint64_t seed) {
  Eigen::MatrixXd w(out, channels_);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, std::sqrt(1.0 / static_cast<double>(channels_)));
  for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = n(rng);
  add_affine_head(std::move(w), Eigen::VectorXd::Zero(out));
}

void Network::add_affine_head(Eigen::MatrixXd weight, Eigen::VectorXd bias) {
  if (stages_.empty()) throw Error("affine head cannot be the first stage");
  if (static_cast<std::size_t>(weight.cols()) != channels_)
    throw Error("affine head input width does not match channel count");
  if (bias.size() != weight.rows()) throw Error("affine head bias size mismatch");
  channels_ = static_cast<std::size_t>(weight.rows());
  stages_.emplace_back(AffineHead{{"W", std::move(weight)}, {"b", Eigen::MatrixXd(bias)}});
  ++generation_;
}

std::vector<ParameterRef> Network::parameters() {
  ++generation_;
  std::vector<ParameterRef> refs;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    const std::string prefix = "stage" + std::to_string(s) + ".";
    if (auto* l = std::get_if<GMLSLayer>(&stages_[s])) {
      for (auto& p : l->map().parameters()) refs.push_back({prefix + p.name, &p.value});
    } else if (auto* h = std::get_if<AffineHead>(&stages_[s])) {
      refs.push_back({prefix + h->weight.name, &h->weight.value});
      refs.push_back({prefix + h->bias.name, &h->bias.value});
    }
  }
  return refs;
}

std::vector<ConstParameterRef> Network::parameters() const {
  std::vector<ConstParameterRef> refs;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    const std::string prefix = "stage" + std::to_string(s) + ".";
    if (const auto* l = std::get_if<GMLSLayer>(&stages_[s])) {
      for (const auto& p : l->map().parameters()) refs.push_back({prefix + p.name, &p.value});
    } else if (const auto* h = std::get_if<AffineHead>(&stages_[s])) {
      refs.push_back({prefix + h->weight.name, &h->weight.value});
      refs.push_back({prefix + h->bias.name, &h->bias.value});
    }
  }
  return refs;
}

Field network_forward(const Network& net, const Field& input, Tape* tape, const CoefficientField* first_coefficients) {
  if (net.stages().empty()) throw Error("network has no stages");
  if (tape) {
    tape->generation = net.generation();
    tape->owner = &net;
    tape->input = input;
    tape->stages.clear();
    tape->stages.reserve(net.stages().size());
  }
  Field x = input;
  for (const Stage& stage : net.stages()) {
    if (const auto* l = std::get_if<GMLSLayer>(&stage)) {
      LayerTape lt;
      if (first_coefficients && &stage == &net.stages().front()) {
        x = l->apply_map(*first_coefficients, tape ? &lt : nullptr);
      } else {
        x = l->forward(x, tape ? &lt : nullptr);
      }
      if (tape) tape->stages.emplace_back(std::move(lt));
    } else if (const auto* p = std::get_if<PoolingLayer>(&stage)) {
      PoolTape pt;
      x = p->forward(x, tape ? &pt : nullptr);
      if (tape) tape->stages.emplace_back(std::move(pt));
    } else if (const auto* a = std::get_if<ActivationStage>(&stage)) {
      if (tape) tape->stages.emplace_back(ActivationTape{x});
      if (a->activation == Activation::relu) x = x.cwiseMax(0.0);
    } else if (std::holds_alternative<MeanReadout>(stage)) {
      if (tape) tape->stages.emplace_back(ReadoutTape{x.rows()});
      x = Field(x.colwise().mean());
    } else if (const auto* h = std::get_if<AffineHead>(&stage)) {
      if (tape) tape->stages.emplace_back(HeadTape{x});
      Field y = x * h->weight.value.transpose();
      y.rowwise() += h->bias.value.col(0).transpose();
      x = std::move(y);
    }
  }
  return x;
}

}  // namespace gmls
