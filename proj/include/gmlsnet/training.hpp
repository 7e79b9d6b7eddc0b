#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gmlsnet/gradients.hpp"
#include "gmlsnet/network.hpp"

namespace gmls {

/// Input/target pairs on fixed geometry.
struct Dataset {
  std::vector<Field> inputs;
  std::vector<Field> targets;

  std::size_t size() const noexcept { return inputs.size(); }
  void add(Field input, Field target);
  /// Samples [begin, end).
  Dataset slice(std::size_t begin, std::size_t end) const;
};

struct LossValue {
  double value = 0.0;
  Field cotangent;  // dL/dpred
};

/// Mean over all entries of (pred - target)^2.
LossValue mse_loss(const Field& pred, const Field& target);

/// Per-sample loss on a network prediction. mse_loss is the default.
using Objective = std::function<LossValue(const Field& pred, const Field& target)>;

enum class OptimizerKind { sgd, adam };
std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config = {}) : config_(config) {}

  const OptimizerConfig& config() const noexcept { return config_; }
  std::size_t steps() const noexcept { return t_; }
  void set_learning_rate(double lr) noexcept { config_.learning_rate = lr; }

  /// params[k] -= update(grads[k]). State is created on the first call.
  void step(const std::vector<ParameterRef>& params, const std::vector<Eigen::MatrixXd>& grads);

 private:
  OptimizerConfig config_;
  std::vector<Eigen::MatrixXd> m_, v_;
  std::size_t t_ = 0;
};

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  OptimizerConfig optimizer;
  double lr_decay = 1.0;  // learning-rate factor applied after every epoch
};

struct EpochRecord {
  std::size_t epoch = 0;  // 0 = before training
  double train_loss = 0.0;
  double test_loss = 0.0;  // NaN without a test split
};

/// Mean per-sample loss over a dataset.
double evaluate(const Network& net, const Dataset& data, const Objective& objective = mse_loss);

/// sqrt(sum |pred - target|^2 / sum |target|^2) over the whole dataset.
double relative_l2(const Network& net, const Dataset& data);

/// Loss and gradient of the batch-mean loss over the given sample indices.
/// Per-sample gradients are summed in index order.
double batch_gradient(const Network& net, const Dataset& data, const std::vector<std::size_t>& indices,
                      const Objective& objective, NetworkGradients& grads);

/// Minibatch training with a seeded shuffle each epoch. The train loss of
/// epoch e > 0 is the full-split loss after that epoch. Throws DivergenceError.
std::vector<EpochRecord> train(Network& net, const Dataset& train_set, const Dataset* test_set,
                               const TrainConfig& config, const Objective& objective = mse_loss);

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

}  // namespace gmls
