#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gmls {

enum class Activation { identity, relu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// A named trainable tensor.
struct Parameter {
  std::string name;
  Eigen::MatrixXd value;
};

/// Intermediates of a batched functional-map evaluation, kept for backprop.
struct FunctionalMapCache {
  Eigen::MatrixXd input;                    // in_width x batch
  std::vector<Eigen::MatrixXd> pre;         // pre-activation of each layer
  std::vector<Eigen::MatrixXd> post;        // activation output of each hidden layer
};

/// The learnable map q from concatenated coefficients to output channels.
/// Linear: y = xi a. MLP: affine layers with `activation` between them and a
/// linear final layer.
class FunctionalMap {
 public:
  enum class Kind { linear, mlp };

  FunctionalMap() = default;
  static FunctionalMap linear(std::size_t out_channels, std::size_t in_width);
  static FunctionalMap linear(const Eigen::MatrixXd& xi);
  static FunctionalMap mlp(std::size_t in_width, std::vector<std::size_t> hidden,
                           std::size_t out_channels, Activation activation = Activation::relu);

  /// xi ~ N(0, 1/in_width) for linear maps; He-normal weights, zero biases for MLPs.
  void initialize(std::uint64_t seed);

  Kind kind() const noexcept { return kind_; }
  bool is_linear() const noexcept { return kind_ == Kind::linear; }
  std::size_t in_width() const noexcept { return in_width_; }
  std::size_t out_channels() const noexcept { return out_; }
  Activation activation() const noexcept { return activation_; }
  const std::vector<std::size_t>& hidden() const noexcept { return hidden_; }
  std::size_t layer_count() const noexcept { return kind_ == Kind::linear ? 1 : hidden_.size() + 1; }

  /// Linear: {"xi"}. MLP: {"W0", "b0", "W1", "b1", ...}.
  std::vector<Parameter>& parameters() noexcept { return params_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }
  const Eigen::MatrixXd& weight(std::size_t layer) const;
  const Eigen::MatrixXd* bias(std::size_t layer) const;

  /// Columns of `a` are independent inputs; returns out_channels x batch.
  Eigen::MatrixXd apply(const Eigen::MatrixXd& a, FunctionalMapCache* cache = nullptr) const;

  /// Given dL/dy (out x batch), accumulates parameter gradients into `grads`
  /// (same layout as parameters()) and returns dL/da (in_width x batch).
  Eigen::MatrixXd backward(const FunctionalMapCache& cache, const Eigen::MatrixXd& dy,
                           std::vector<Eigen::MatrixXd>& grads) const;

  /// d y_o / d a for every output o at a single input (out x in_width).
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& a) const;

 private:
  Kind kind_ = Kind::linear;
  std::size_t in_width_ = 0;
  std::size_t out_ = 0;
  std::vector<std::size_t> hidden_;
  Activation activation_ = Activation::relu;
  std::vector<Parameter> params_;
};

}  // namespace gmls
