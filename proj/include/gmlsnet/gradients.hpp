#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gmlsnet/network.hpp"

namespace gmls {

/// dL/d(parameters of q), in FunctionalMap::parameters() order. `upstream` is
/// dL/d(layer output), rows = targets, cols = out channels.
std::vector<Eigen::MatrixXd> grad_wrt_q(const GMLSLayer& layer, const LayerTape& tape,
                                        const Field& upstream);

/// dL/d(input field values), rows = source points. Shared-source layers only.
Field grad_wrt_field(const GMLSLayer& layer, const LayerTape& tape, const Field& upstream);

/// Per-channel input cotangents for layers with per-channel sampling sites.
std::vector<Eigen::VectorXd> grad_wrt_channels(const GMLSLayer& layer, const LayerTape& tape,
                                               const Field& upstream);

struct PositionGradient {
  Eigen::MatrixXd target;  // N_tgt x dim, dL/dx_i with sources fixed
  Eigen::MatrixXd source;  // N_src x dim, dL/dx_j with targets fixed
};

/// Derivative of the layer output with respect to point positions for a fixed
/// neighbor topology. Requires kernel power >= 2 and no neighbor within
/// 1e-12 * epsilon of the support boundary.
PositionGradient grad_wrt_positions(const GMLSLayer& layer, const Field& input,
                                    const Field& upstream);

struct NetworkGradients {
  std::vector<std::string> ids;
  std::vector<Eigen::MatrixXd> values;  // same order as Network::parameters()
  Field input;                          // dL/d(input field); empty for per-channel first stages

  void clear();
  void accumulate(const NetworkGradients& other);
  void scale(double s);
  const Eigen::MatrixXd& operator[](const std::string& id) const;
};

/// Reverse pass over a recorded tape. Throws if the tape is stale. With
/// `input_gradient` false the pass stops at the first stage's coefficients.
NetworkGradients network_backward(const Network& net, const Tape& tape, const Field& upstream,
                                  bool input_gradient = true);

}  // namespace gmls
