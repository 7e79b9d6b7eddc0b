#include "gmlsnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>

#include "gmlsnet/error.hpp"
#include "gmlsnet/parallel.hpp"

namespace gmls {

void Dataset::add(Field input, Field target) {
  inputs.push_back(std::move(input));
  targets.push_back(std::move(target));
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw Error("dataset slice out of range");
  Dataset d;
  d.inputs.assign(inputs.begin() + begin, inputs.begin() + end);
  d.targets.assign(targets.begin() + begin, targets.begin() + end);
  return d;
}

LossValue mse_loss(const Field& pred, const Field& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw Error("mse_loss shape mismatch: " + std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) +
                " vs " + std::to_string(target.rows()) + "x" + std::to_string(target.cols()));
  const double n = static_cast<double>(pred.size());
  Field diff = pred - target;
  LossValue out;
  out.value = diff.squaredNorm() / n;
  out.cotangent = (2.0 / n) * diff;
  return out;
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw Error("unknown optimizer '" + name + "'");
}

void Optimizer::step(const std::vector<ParameterRef>& params, const std::vector<Eigen::MatrixXd>& grads) {
  if (params.size() != grads.size()) throw Error("optimizer: parameter/gradient count mismatch");
  if (m_.empty() && config_.kind == OptimizerKind::adam) {
    for (const auto& p : params) {
      m_.push_back(Eigen::MatrixXd::Zero(p.value->rows(), p.value->cols()));
      v_.push_back(Eigen::MatrixXd::Zero(p.value->rows(), p.value->cols()));
    }
  }
  ++t_;
  const double lr = config_.learning_rate;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Eigen::MatrixXd& p = *params[k].value;
    const Eigen::MatrixXd& g = grads[k];
    if (g.rows() != p.rows() || g.cols() != p.cols()) throw Error("optimizer: shape mismatch for " + params[k].id);
    if (config_.kind == OptimizerKind::sgd) {
      p -= lr * g;
      continue;
    }
    if (m_[k].rows() != p.rows() || m_[k].cols() != p.cols())
      throw Error("optimizer: state shape mismatch for " + params[k].id);
    m_[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * g;
    v_[k] = config_.beta2 * v_[k] + (1.0 - config_.beta2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    p.array() -= lr * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + config_.epsilon);
  }
}

namespace {

using Encoded = std::vector<CoefficientField>;

// The encoding of a leading GMLS layer has no parameters, so training encodes
// every sample once. Empty when the first stage is not a GMLS layer.
Encoded encode_first_layer(const Network& net, const Dataset& data) {
  if (net.stages().empty()) return {};
  const auto* l = std::get_if<GMLSLayer>(&net.stages().front());
  if (!l) return {};
  Encoded out(data.size());
  for (std::size_t s = 0; s < data.size(); ++s) out[s] = l->encode(data.inputs[s]);
  return out;
}

const CoefficientField* encoded_at(const Encoded* enc, std::size_t s) {
  return enc && !enc->empty() ? &(*enc)[s] : nullptr;
}

double evaluate_impl(const Network& net, const Dataset& data, const Objective& objective, const Encoded* enc) {
  if (data.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> losses(data.size());
  parallel_for(data.size(), [&](std::size_t s) {
    losses[s] = objective(network_forward(net, data.inputs[s], nullptr, encoded_at(enc, s)), data.targets[s]).value;
  });
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(data.size());
}

double batch_gradient_impl(const Network& net, const Dataset& data, const std::vector<std::size_t>& indices,
                           const Objective& objective, NetworkGradients& grads, const Encoded* enc) {
  std::vector<NetworkGradients> per(indices.size());
  std::vector<double> losses(indices.size());
  parallel_for(indices.size(), [&](std::size_t b) {
    const std::size_t s = indices[b];
    Tape tape;
    const Field pred = network_forward(net, data.inputs[s], &tape, encoded_at(enc, s));
    LossValue l = objective(pred, data.targets[s]);
    losses[b] = l.value;
    per[b] = network_backward(net, tape, l.cotangent, false);
  });
  grads = NetworkGradients();
  double loss = 0.0;
  for (std::size_t b = 0; b < indices.size(); ++b) {
    grads.accumulate(per[b]);
    loss += losses[b];
  }
  const double inv = 1.0 / static_cast<double>(indices.size());
  grads.scale(inv);
  return loss * inv;
}

}  // namespace

double evaluate(const Network& net, const Dataset& data, const Objective& objective) {
  return evaluate_impl(net, data, objective, nullptr);
}

double relative_l2(const Network& net, const Dataset& data) {
  std::vector<double> num(data.size()), den(data.size());
  parallel_for(data.size(), [&](std::size_t s) {
    num[s] = (network_forward(net, data.inputs[s]) - data.targets[s]).squaredNorm();
    den[s] = data.targets[s].squaredNorm();
  });
  const double n = std::accumulate(num.begin(), num.end(), 0.0);
  const double d = std::accumulate(den.begin(), den.end(), 0.0);
  return d > 0.0 ? std::sqrt(n / d) : std::sqrt(n);
}

double batch_gradient(const Network& net, const Dataset& data, const std::vector<std::size_t>& indices,
                      const Objective& objective, NetworkGradients& grads) {
  return batch_gradient_impl(net, data, indices, objective, grads, nullptr);
}

std::vector<EpochRecord> train(Network& net, const Dataset& train_set, const Dataset* test_set,
                               const TrainConfig& config, const Objective& objective) {
  if (train_set.size() == 0) throw Error("training set is empty");
  if (config.batch_size == 0) throw Error("batch size must be positive");
  Optimizer opt(config.optimizer);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  const Encoded train_enc = encode_first_layer(net, train_set);
  const Encoded test_enc = test_set ? encode_first_layer(net, *test_set) : Encoded{};
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto snapshot = [&](std::size_t epoch) {
    EpochRecord r{epoch, evaluate_impl(net, train_set, objective, &train_enc),
                  test_set && test_set->size() ? evaluate_impl(net, *test_set, objective, &test_enc) : nan};
    if (!std::isfinite(r.train_loss)) throw DivergenceError(epoch, 0);
    return r;
  };
  std::vector<EpochRecord> history{snapshot(0)};
  NetworkGradients grads;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t batch = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::vector<std::size_t> idx(order.begin() + start, order.begin() + end);
      const double loss = batch_gradient_impl(net, train_set, idx, objective, grads, &train_enc);
      bool finite = std::isfinite(loss);
      for (const auto& g : grads.values) finite = finite && g.allFinite();
      if (!finite) throw DivergenceError(epoch, batch);
      opt.step(net.parameters(), grads.values);
    }
    history.push_back(snapshot(epoch));
    opt.set_learning_rate(opt.config().learning_rate * config.lr_decay);
  }
  return history;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,train_loss,test_loss\n" << std::setprecision(17);
  for (const auto& r : history) out << r.epoch << ',' << r.train_loss << ',' << r.test_loss << '\n';
}

}  // namespace gmls
