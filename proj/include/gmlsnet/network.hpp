#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "gmlsnet/layer.hpp"

namespace gmls {

struct ActivationStage {
  Activation activation = Activation::relu;
};

/// Averages every channel over the remaining points: N x C -> 1 x C.
struct MeanReadout {};

/// y = W x + b row-wise: N x in -> N x out.
struct AffineHead {
  Parameter weight;  // out x in
  Parameter bias;    // out x 1
};

using Stage = std::variant<GMLSLayer, PoolingLayer, ActivationStage, MeanReadout, AffineHead>;

std::string stage_kind(const Stage& stage);

struct ActivationTape {
  Field input;
};
struct ReadoutTape {
  Eigen::Index rows = 0;
};
struct HeadTape {
  Field input;
};
using StageTape = std::variant<LayerTape, PoolTape, ActivationTape, ReadoutTape, HeadTape>;

/// Intermediates recorded by a forward pass.
struct Tape {
  std::uint64_t generation = 0;
  const void* owner = nullptr;
  Field input;
  std::vector<StageTape> stages;
};

/// Reference to a trainable tensor with a stable ID "stage<k>.<name>".
struct ParameterRef {
  std::string id;
  Eigen::MatrixXd* value;
};
struct ConstParameterRef {
  std::string id;
  const Eigen::MatrixXd* value;
};

/// Ordered stages with shape checks at construction time.
class Network {
 public:
  Network() = default;

  void add(GMLSLayer layer);
  void add(PoolingLayer pool);
  void add_activation(Activation activation = Activation::relu);
  void add_mean_readout();
  /// Affine head with weights ~ N(0, 1/in), zero bias.
  void add_affine_head(std::size_t out, std::uint64_t seed);
  void add_affine_head(Eigen::MatrixXd weight, Eigen::VectorXd bias);

  const std::vector<Stage>& stages() const noexcept { return stages_; }
  std::vector<Stage>& mutable_stages() {
    ++generation_;
    return stages_;
  }
  std::size_t input_channels() const noexcept { return input_channels_; }
  std::size_t output_channels() const noexcept { return channels_; }
  /// Point count of the input field, 0 before the first stage.
  std::size_t input_points() const noexcept { return input_points_; }

  /// Mutable access bumps the generation so that older tapes become stale.
  std::vector<ParameterRef> parameters();
  std::vector<ConstParameterRef> parameters() const;
  std::uint64_t generation() const noexcept { return generation_; }

 private:
  void check_points(std::size_t points, const std::string& what) const;

  std::vector<Stage> stages_;
  std::size_t input_channels_ = 0;
  std::size_t input_points_ = 0;
  std::size_t channels_ = 0;
  std::size_t points_ = 0;   // 1 after readout
  bool cloud_valid_ = true;  // false after readout
  std::shared_ptr<const PointCloud> cloud_;
  std::uint64_t generation_ = 1;
};

/// `first_coefficients`, when given, replaces the encoding step of a leading
/// GMLS layer; it must equal that layer's encoding of `input`.
Field network_forward(const Network& net, const Field& input, Tape* tape = nullptr,
                      const CoefficientField* first_coefficients = nullptr);

}  // namespace gmls
