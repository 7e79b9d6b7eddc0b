#pragma once

// Shared fixtures for the unit tests.

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>

#include <Eigen/Dense>

#include "gmlsnet/estimator.hpp"
#include "gmlsnet/layer.hpp"

namespace gmls::test {

inline std::shared_ptr<const PointCloud> share(PointCloud c) {
  return std::make_shared<const PointCloud>(std::move(c));
}

inline std::shared_ptr<const CoefficientEncoder> make_encoder(std::shared_ptr<const PointCloud> src,
                                                              std::shared_ptr<const PointCloud> tgt,
                                                              double eps, int order, int power = 4) {
  return std::make_shared<const CoefficientEncoder>(src, tgt, WeightKernel{eps, power},
                                                    MonomialBasis(src->dim(), order, eps));
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                                     double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = n(rng);
  return m;
}

/// Polynomial of total degree <= order with random coefficients about `origin`.
struct RandomPolynomial {
  int dim;
  int order;
  std::vector<std::array<int, 2>> powers;
  std::vector<double> coeffs;
  std::array<double, 2> origin{0.0, 0.0};

  RandomPolynomial(int d, int m, std::mt19937_64& rng) : dim(d), order(m) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> o(0.0, 1.0);
    origin = {o(rng), d == 2 ? o(rng) : 0.0};
    for (int total = 0; total <= m; ++total)
      for (int px = total; px >= 0; --px) {
        const int py = total - px;
        if (d == 1 && py != 0) continue;
        powers.push_back({px, py});
        coeffs.push_back(n(rng));
      }
  }

  double operator()(std::span<const double> x) const {
    double s = 0.0;
    for (std::size_t k = 0; k < powers.size(); ++k) {
      double t = coeffs[k] * std::pow(x[0] - origin[0], powers[k][0]);
      if (dim == 2) t *= std::pow(x[1] - origin[1], powers[k][1]);
      s += t;
    }
    return s;
  }

  Eigen::VectorXd sample(const PointCloud& c) const {
    Eigen::VectorXd u(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) u[i] = (*this)(c.point(i));
    return u;
  }
};

inline double rel_err(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace gmls::test
