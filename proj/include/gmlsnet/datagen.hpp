#pragma once

#include <complex>
#include <random>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gmlsnet/point_cloud.hpp"

namespace gmls {

/// Independent stream seed for sample `index` of a run seeded with `master`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

struct RandomFieldConfig {
  int dim = 1;
  double length = 1.0;
  int max_wavenumber = 8;  // K, modes k in [-K, K]^dim
  double alpha1 = 0.1;
  std::uint64_t seed = 0;
};

enum class SpectralOp { laplacian, burgers };

/// u(x) = sum_k xi_k exp(i 2 pi k.x / L) with xi_{-k} = conj(xi_k) and
/// E|xi_k|^2 = exp(-2 alpha1 |k|^2). Stores one representative per +-k pair.
class SpectralField {
 public:
  struct Mode {
    int k[2] = {0, 0};
    std::complex<double> xi;
  };

  SpectralField(int dim, double length, std::vector<Mode> modes);

  int dim() const noexcept { return dim_; }
  double length() const noexcept { return length_; }
  const std::vector<Mode>& modes() const noexcept { return modes_; }

  double value(std::span<const double> x) const;
  double d_dx(std::span<const double> x) const;
  double d2_dx2(std::span<const double> x) const;
  double laplacian(std::span<const double> x) const;

  Eigen::VectorXd sample(const PointCloud& cloud) const;

 private:
  // sum over stored modes of mult(k) * factor(k) * xi e^{i theta}, real part
  template <class F>
  double synth(std::span<const double> x, F factor) const;

  int dim_;
  double length_;
  std::vector<Mode> modes_;
};

/// Draws the spectrum. Mode (0,..) is real; a +-k pair contributes 2 Re(xi_k e^{i theta}).
SpectralField random_spectrum(const RandomFieldConfig& cfg);
Eigen::VectorXd sample_random_field(const RandomFieldConfig& cfg, const PointCloud& cloud);

/// Laplacian, or the Burgers operator -u u_x + nu_b u_xx (axis 0).
Eigen::VectorXd apply_spectral_operator(const SpectralField& field, SpectralOp op,
                                        const PointCloud& cloud, double nu_b = 0.01);

/// sum_k exp(-2 alpha1 |k|^2), the pointwise variance of the field.
double spectral_variance(const RandomFieldConfig& cfg);

struct AdvDiffConfig {
  double advection = 1.0;   // a
  double diffusion = 0.05;  // nu
  double x0 = 5.0;
  double length = 30.0;
  std::size_t cells = 100;
  double dt_ratio = 1.0;    // dt / dt_cfl
};

/// 1/(a sqrt(4 pi nu t)) exp(-(x - x0 - a t)^2 / (4 nu t)). Throws for t <= 0.
double advdiff_exact(double x, double t, const AdvDiffConfig& cfg);
/// Mean of advdiff_exact over [left, right].
double advdiff_cell_average(double left, double right, double t, const AdvDiffConfig& cfg);

struct BrownianConfig {
  std::size_t particles = 100000;
  std::size_t cells = 50;
  double diffusivity = 1.0;
  double lx = 1.0;
  double ly = 0.1;
  double dt = 1e-4;
  std::uint64_t seed = 0;
};

/// Periodic 2D Brownian motion with per-axis increments N(0, 2 D dt).
class BrownianSimulator {
 public:
  explicit BrownianSimulator(const BrownianConfig& cfg);

  const BrownianConfig& config() const noexcept { return cfg_; }
  std::size_t step_count() const noexcept { return steps_; }
  double time() const noexcept { return static_cast<double>(steps_) * cfg_.dt; }
  const std::vector<double>& x() const noexcept { return x_; }
  const std::vector<double>& y() const noexcept { return y_; }
  /// x without periodic wrapping, for displacement statistics.
  const std::vector<double>& unwrapped_x() const noexcept { return ux_; }

  void step(std::size_t n = 1);

 private:
  BrownianConfig cfg_;
  std::vector<double> x_, y_, ux_, noise_;
  std::size_t steps_ = 0;
  std::mt19937_64 rng_;
};

/// x-positions after each of the requested step counts (ascending).
std::vector<std::vector<double>> simulate_brownian(const BrownianConfig& cfg,
                                                   const std::vector<std::size_t>& record_steps);

/// Particle counts per uniform cell of [0, length).
Eigen::VectorXd density_histogram(const std::vector<double>& x, std::size_t cells, double length = 1.0);

/// Periodic discrete Gaussian convolution, sigma in cells, kernel normalized to sum 1.
Eigen::VectorXd gaussian_filter(const Eigen::VectorXd& rho, double sigma_cells);

}  // namespace gmls
