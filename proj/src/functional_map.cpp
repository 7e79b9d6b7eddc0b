#include "gmlsnet/functional_map.hpp"

#include <cmath>
#include <random>

#include "gmlsnet/error.hpp"

namespace gmls {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "identity" || name == "linear") return Activation::identity;
  throw Error("unknown activation '" + name + "'");
}

FunctionalMap FunctionalMap::linear(std::size_t out_channels, std::size_t in_width) {
  FunctionalMap m;
  m.kind_ = Kind::linear;
  m.in_width_ = in_width;
  m.out_ = out_channels;
  m.params_.push_back({"xi", Eigen::MatrixXd::Zero(out_channels, in_width)});
  return m;
}

FunctionalMap FunctionalMap::linear(const Eigen::MatrixXd& xi) {
  FunctionalMap m = linear(static_cast<std::size_t>(xi.rows()), static_cast<std::size_t>(xi.cols()));
  m.params_[0].value = xi;
  return m;
}

FunctionalMap FunctionalMap::mlp(std::size_t in_width, std::vector<std::size_t> hidden,
                                 std::size_t out_channels, Activation activation) {
  FunctionalMap m;
  m.kind_ = Kind::mlp;
  m.in_width_ = in_width;
  m.out_ = out_channels;
  m.hidden_ = std::move(hidden);
  m.activation_ = activation;
  std::size_t fan_in = in_width;
  for (std::size_t l = 0; l <= m.hidden_.size(); ++l) {
    const std::size_t width = l < m.hidden_.size() ? m.hidden_[l] : out_channels;
    m.params_.push_back({"W" + std::to_string(l), Eigen::MatrixXd::Zero(width, fan_in)});
    m.params_.push_back({"b" + std::to_string(l), Eigen::MatrixXd::Zero(width, 1)});
    fan_in = width;
  }
  return m;
}

void FunctionalMap::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  if (kind_ == Kind::linear) {
    std::normal_distribution<double> n(0.0, std::sqrt(1.0 / static_cast<double>(in_width_)));
    for (Eigen::Index k = 0; k < params_[0].value.size(); ++k) params_[0].value.data()[k] = n(rng);
    return;
  }
  for (std::size_t l = 0; l < layer_count(); ++l) {
    Eigen::MatrixXd& w = params_[2 * l].value;
    std::normal_distribution<double> n(0.0, std::sqrt(2.0 / static_cast<double>(w.cols())));
    for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = n(rng);
    params_[2 * l + 1].value.setZero();
  }
}

const Eigen::MatrixXd& FunctionalMap::weight(std::size_t layer) const {
  return kind_ == Kind::linear ? params_[0].value : params_[2 * layer].value;
}

const Eigen::MatrixXd* FunctionalMap::bias(std::size_t layer) const {
  return kind_ == Kind::linear ? nullptr : &params_[2 * layer + 1].value;
}

namespace {

void activate(Activation act, Eigen::MatrixXd& z) {
  if (act == Activation::relu) z = z.cwiseMax(0.0);
}

}  // namespace

Eigen::MatrixXd FunctionalMap::apply(const Eigen::MatrixXd& a, FunctionalMapCache* cache) const {
  if (static_cast<std::size_t>(a.rows()) != in_width_)
    throw Error("functional map input width " + std::to_string(a.rows()) + " != " +
                std::to_string(in_width_));
  if (cache != nullptr) {
    cache->input = a;
    cache->pre.clear();
    cache->post.clear();
  }
  if (kind_ == Kind::linear) return params_[0].value * a;
  Eigen::MatrixXd h = a;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    Eigen::MatrixXd z = params_[2 * l].value * h;
    z.colwise() += params_[2 * l + 1].value.col(0);
    if (l + 1 == layer_count()) return z;
    if (cache != nullptr) cache->pre.push_back(z);
    activate(activation_, z);
    if (cache != nullptr) cache->post.push_back(z);
    h = std::move(z);
  }
  return h;
}

Eigen::MatrixXd FunctionalMap::backward(const FunctionalMapCache& cache, const Eigen::MatrixXd& dy,
                                        std::vector<Eigen::MatrixXd>& grads) const {
  if (grads.size() != params_.size()) {
    grads.clear();
    for (const auto& p : params_) grads.push_back(Eigen::MatrixXd::Zero(p.value.rows(), p.value.cols()));
  }
  if (kind_ == Kind::linear) {
    grads[0].noalias() += dy * cache.input.transpose();
    return params_[0].value.transpose() * dy;
  }
  Eigen::MatrixXd delta = dy;
  for (std::size_t l = layer_count(); l-- > 0;) {
    const Eigen::MatrixXd& in = l == 0 ? cache.input : cache.post[l - 1];
    grads[2 * l].noalias() += delta * in.transpose();
    grads[2 * l + 1].col(0) += delta.rowwise().sum();
    Eigen::MatrixXd dh = params_[2 * l].value.transpose() * delta;
    if (l == 0) return dh;
    if (activation_ == Activation::relu)
      dh = dh.cwiseProduct((cache.pre[l - 1].array() > 0.0).cast<double>().matrix());
    delta = std::move(dh);
  }
  return delta;
}

Eigen::MatrixXd FunctionalMap::jacobian(const Eigen::VectorXd& a) const {
  if (kind_ == Kind::linear) return params_[0].value;
  FunctionalMapCache cache;
  apply(a, &cache);
  Eigen::MatrixXd jac(out_, in_width_);
  std::vector<Eigen::MatrixXd> scratch;
  for (std::size_t o = 0; o < out_; ++o) {
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(out_, 1);
    e(o, 0) = 1.0;
    scratch.clear();
    jac.row(o) = backward(cache, e, scratch).col(0).transpose();
  }
  return jac;
}

}  // namespace gmls
