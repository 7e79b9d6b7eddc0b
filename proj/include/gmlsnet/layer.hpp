#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "gmlsnet/estimator.hpp"
#include "gmlsnet/functional_map.hpp"

namespace gmls {

struct LayerTape {
  CoefficientField coefficients;
  FunctionalMapCache map_cache;
};

/// Maps multi-channel fields on source clouds to multi-channel fields on a
/// target cloud: each input channel is encoded into GMLS coefficients about
/// every target point, the per-target concatenation (channels * Q) is fed to q.
class GMLSLayer {
 public:
  GMLSLayer() = default;
  /// All channels sampled on the encoder's source cloud.
  GMLSLayer(std::shared_ptr<const CoefficientEncoder> encoder, std::size_t in_channels,
            FunctionalMap map);
  /// Channel c sampled on encoders[binding[c]]'s source. All encoders share the
  /// target cloud and basis size.
  GMLSLayer(std::vector<std::shared_ptr<const CoefficientEncoder>> encoders,
            std::vector<std::size_t> binding, FunctionalMap map);

  std::size_t in_channels() const noexcept { return binding_.size(); }
  std::size_t out_channels() const noexcept { return map_.out_channels(); }
  std::size_t q() const noexcept { return encoders_.front()->q(); }
  bool shared_source() const noexcept { return encoders_.size() == 1; }

  const CoefficientEncoder& encoder(std::size_t channel = 0) const {
    return *encoders_[binding_[channel]];
  }
  const std::vector<std::shared_ptr<const CoefficientEncoder>>& encoders() const noexcept {
    return encoders_;
  }
  const std::vector<std::size_t>& binding() const noexcept { return binding_; }
  const PointCloud& target() const { return encoders_.front()->target(); }
  const std::shared_ptr<const PointCloud>& target_ptr() const { return encoders_.front()->target_ptr(); }
  const PointCloud& source(std::size_t channel = 0) const { return encoder(channel).source(); }

  FunctionalMap& map() noexcept { return map_; }
  const FunctionalMap& map() const noexcept { return map_; }

  /// Shared-source input: rows = source points, cols = channels.
  CoefficientField encode(const Field& input) const;
  /// Per-channel input, one vector per channel on its bound source cloud.
  CoefficientField encode(const std::vector<Eigen::VectorXd>& channels) const;

  /// Output rows = target points, cols = out channels.
  Field forward(const Field& input, LayerTape* tape = nullptr) const;
  Field forward(const std::vector<Eigen::VectorXd>& channels, LayerTape* tape = nullptr) const;
  Field apply_map(const CoefficientField& coefficients, LayerTape* tape = nullptr) const;

 private:
  std::vector<std::shared_ptr<const CoefficientEncoder>> encoders_;
  std::vector<std::size_t> binding_;
  FunctionalMap map_;
};

/// Linear layers only: c_ij with output_channel(i) = sum_j c_ij input_channel(j).
StencilMatrix export_stencil(const GMLSLayer& layer, std::size_t out_channel = 0,
                             std::size_t in_channel = 0);

enum class Reducer { max, mean };

struct PoolTape {
  // argmax source index per (target, channel), max pooling only
  std::vector<std::uint32_t> argmax;
  std::size_t channels = 0;
};

/// Channel-wise reduction over each target's epsilon-ball in the source cloud.
class PoolingLayer {
 public:
  PoolingLayer() = default;
  PoolingLayer(Reducer reducer, std::shared_ptr<const PointCloud> source,
               std::shared_ptr<const PointCloud> target, double epsilon);

  Reducer reducer() const noexcept { return reducer_; }
  double epsilon() const noexcept { return neighbors_.epsilon(); }
  const PointCloud& source() const { return *source_; }
  const PointCloud& target() const { return *target_; }
  const std::shared_ptr<const PointCloud>& source_ptr() const { return source_; }
  const std::shared_ptr<const PointCloud>& target_ptr() const { return target_; }
  const NeighborList& neighbors() const noexcept { return neighbors_; }

  Field forward(const Field& input, PoolTape* tape = nullptr) const;
  Field backward(const PoolTape& tape, const Field& upstream) const;

 private:
  Reducer reducer_ = Reducer::max;
  std::shared_ptr<const PointCloud> source_;
  std::shared_ptr<const PointCloud> target_;
  NeighborList neighbors_;
};

}  // namespace gmls
