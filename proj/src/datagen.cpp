#include "gmlsnet/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gmlsnet/error.hpp"
#include "gmlsnet/simd.hpp"

namespace gmls {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t s = master;
  const std::uint64_t a = splitmix64(s);
  s = a ^ (index * 0xd1b54a32d192ed03ULL);
  return splitmix64(s);
}

SpectralField::SpectralField(int dim, double length, std::vector<Mode> modes)
    : dim_(dim), length_(length), modes_(std::move(modes)) {
  if (dim != 1 && dim != 2) throw Error("spectral fields support dim 1 or 2");
  if (!(length > 0.0)) throw Error("spectral field length must be positive");
}

template <class F>
double SpectralField::synth(std::span<const double> x, F factor) const {
  if (x.size() != static_cast<std::size_t>(dim_)) throw Error("spectral field evaluation dimension mismatch");
  const double w = 2.0 * std::numbers::pi / length_;
  // per-axis phases e^{i w k x_d} for |k| <= kmax by repeated multiplication
  int kmax = 0;
  for (const Mode& m : modes_) kmax = std::max({kmax, std::abs(m.k[0]), std::abs(m.k[1])});
  const std::size_t width = 2 * static_cast<std::size_t>(kmax) + 1;
  std::vector<std::complex<double>> phase(width * static_cast<std::size_t>(dim_));
  for (int d = 0; d < dim_; ++d) {
    std::complex<double>* p = phase.data() + d * width + kmax;
    const std::complex<double> base = std::polar(1.0, w * x[d]);
    p[0] = 1.0;
    for (int k = 1; k <= kmax; ++k) {
      p[k] = p[k - 1] * base;
      p[-k] = std::conj(p[k]);
    }
  }
  double sum = 0.0;
  for (const Mode& m : modes_) {
    const bool zero = m.k[0] == 0 && m.k[1] == 0;
    std::complex<double> e = phase[kmax + m.k[0]];
    if (dim_ == 2) e *= phase[width + kmax + m.k[1]];
    const std::complex<double> term = factor(m, w) * m.xi * e;
    sum += (zero ? 1.0 : 2.0) * term.real();
  }
  return sum;
}

double SpectralField::value(std::span<const double> x) const {
  return synth(x, [](const Mode&, double) { return std::complex<double>(1.0, 0.0); });
}

double SpectralField::d_dx(std::span<const double> x) const {
  return synth(x, [](const Mode& m, double w) { return std::complex<double>(0.0, w * m.k[0]); });
}

double SpectralField::d2_dx2(std::span<const double> x) const {
  return synth(x, [](const Mode& m, double w) {
    const double kx = w * m.k[0];
    return std::complex<double>(-kx * kx, 0.0);
  });
}

double SpectralField::laplacian(std::span<const double> x) const {
  const int d = dim_;
  return synth(x, [d](const Mode& m, double w) {
    double k2 = static_cast<double>(m.k[0]) * m.k[0];
    if (d == 2) k2 += static_cast<double>(m.k[1]) * m.k[1];
    return std::complex<double>(-w * w * k2, 0.0);
  });
}

Eigen::VectorXd SpectralField::sample(const PointCloud& cloud) const {
  if (cloud.dim() != dim_) throw Error("cloud dimension does not match spectral field");
  Eigen::VectorXd u(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) u[i] = value(cloud.point(i));
  return u;
}

SpectralField random_spectrum(const RandomFieldConfig& cfg) {
  if (cfg.max_wavenumber < 0) throw Error("max wavenumber must be nonnegative");
  if (!(cfg.alpha1 > 0.0)) throw Error("alpha1 must be positive");
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> eta(0.0, 1.0);
  const int kmax = cfg.max_wavenumber;
  std::vector<SpectralField::Mode> modes;
  auto draw = [&](int kx, int ky) {
    const double k2 = static_cast<double>(kx) * kx + static_cast<double>(ky) * ky;
    const double s = std::exp(-cfg.alpha1 * k2);
    SpectralField::Mode m;
    m.k[0] = kx;
    m.k[1] = ky;
    if (kx == 0 && ky == 0) {
      m.xi = {s * eta(rng), 0.0};
    } else {
      const double re = eta(rng);
      const double im = eta(rng);
      m.xi = {s * re / std::numbers::sqrt2, s * im / std::numbers::sqrt2};
    }
    modes.push_back(m);
  };
  draw(0, 0);
  if (cfg.dim == 1) {
    for (int k = 1; k <= kmax; ++k) draw(k, 0);
  } else {
    // half-space representatives: ky > 0 on kx = 0, then kx > 0 for every ky
    for (int ky = 1; ky <= kmax; ++ky) draw(0, ky);
    for (int kx = 1; kx <= kmax; ++kx)
      for (int ky = -kmax; ky <= kmax; ++ky) draw(kx, ky);
  }
  return SpectralField(cfg.dim, cfg.length, std::move(modes));
}

Eigen::VectorXd sample_random_field(const RandomFieldConfig& cfg, const PointCloud& cloud) {
  return random_spectrum(cfg).sample(cloud);
}

Eigen::VectorXd apply_spectral_operator(const SpectralField& field, SpectralOp op,
                                        const PointCloud& cloud, double nu_b) {
  if (cloud.dim() != field.dim()) throw Error("cloud dimension does not match spectral field");
  Eigen::VectorXd out(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto x = cloud.point(i);
    if (op == SpectralOp::laplacian) {
      out[i] = field.laplacian(x);
    } else {
      out[i] = -field.value(x) * field.d_dx(x) + nu_b * field.d2_dx2(x);
    }
  }
  return out;
}

double spectral_variance(const RandomFieldConfig& cfg) {
  const int kmax = cfg.max_wavenumber;
  double s1 = 0.0;
  for (int k = -kmax; k <= kmax; ++k) s1 += std::exp(-2.0 * cfg.alpha1 * k * k);
  return cfg.dim == 1 ? s1 : s1 * s1;
}

double advdiff_exact(double x, double t, const AdvDiffConfig& cfg) {
  if (!(t > 0.0)) throw Error("advdiff_exact requires t > 0");
  const double a = cfg.advection;
  const double nu = cfg.diffusion;
  const double c = x - (cfg.x0 + a * t);
  return std::exp(-c * c / (4.0 * nu * t)) / (a * std::sqrt(4.0 * std::numbers::pi * nu * t));
}

double advdiff_cell_average(double left, double right, double t, const AdvDiffConfig& cfg) {
  if (!(t > 0.0)) throw Error("advdiff_cell_average requires t > 0");
  if (!(right > left)) throw Error("cell must have positive width");
  const double center = cfg.x0 + cfg.advection * t;
  const double s = std::sqrt(4.0 * cfg.diffusion * t);
  const double mass = 0.5 * (std::erf((right - center) / s) - std::erf((left - center) / s)) / cfg.advection;
  return mass / (right - left);
}

BrownianSimulator::BrownianSimulator(const BrownianConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {
  if (cfg.particles == 0) throw Error("particle count must be positive");
  if (cfg.diffusivity < 0.0 || !(cfg.dt > 0.0)) throw Error("diffusivity must be >= 0 and dt > 0");
  std::uniform_real_distribution<double> ux(0.0, 0.5 * cfg.lx), uy(0.0, cfg.ly);
  x_.resize(cfg.particles);
  y_.resize(cfg.particles);
  for (std::size_t p = 0; p < cfg.particles; ++p) {
    x_[p] = ux(rng_);
    y_[p] = uy(rng_);
  }
  ux_ = x_;
  noise_.resize(cfg.particles);
}

void BrownianSimulator::step(std::size_t n) {
  const auto& k = simd::active();
  const double scale = std::sqrt(2.0 * cfg_.diffusivity * cfg_.dt);
  std::normal_distribution<double> eta(0.0, 1.0);
  const std::size_t np = x_.size();
  for (std::size_t s = 0; s < n; ++s) {
    for (double& z : noise_) z = eta(rng_);
    k.axpy(scale, noise_.data(), ux_.data(), np);
    k.periodic_step(x_.data(), noise_.data(), scale, cfg_.lx, np);
    for (double& z : noise_) z = eta(rng_);
    k.periodic_step(y_.data(), noise_.data(), scale, cfg_.ly, np);
    ++steps_;
  }
}

std::vector<std::vector<double>> simulate_brownian(const BrownianConfig& cfg,
                                                   const std::vector<std::size_t>& record_steps) {
  BrownianSimulator sim(cfg);
  std::vector<std::vector<double>> out;
  for (std::size_t target : record_steps) {
    if (target < sim.step_count()) throw Error("record steps must be ascending");
    sim.step(target - sim.step_count());
    out.push_back(sim.x());
  }
  return out;
}

Eigen::VectorXd density_histogram(const std::vector<double>& x, std::size_t cells, double length) {
  if (cells == 0) throw Error("histogram needs at least one cell");
  Eigen::VectorXd rho = Eigen::VectorXd::Zero(cells);
  const double inv = static_cast<double>(cells) / length;
  for (double v : x) {
    auto c = static_cast<std::ptrdiff_t>(std::floor(v * inv));
    if (c < 0 || c >= static_cast<std::ptrdiff_t>(cells))
      throw Error("particle outside histogram range at x = " + std::to_string(v));
    rho[c] += 1.0;
  }
  return rho;
}

Eigen::VectorXd gaussian_filter(const Eigen::VectorXd& rho, double sigma_cells) {
  if (!(sigma_cells > 0.0)) throw Error("filter width must be positive");
  const auto n = static_cast<std::ptrdiff_t>(rho.size());
  // wrapped offsets -r..r with 2r + 1 <= n, so each source cell appears once
  const std::ptrdiff_t r = (n - 1) / 2;
  std::vector<double> w(2 * r + 1);
  double total = 0.0;
  for (std::ptrdiff_t k = -r; k <= r; ++k) {
    w[k + r] = std::exp(-0.5 * static_cast<double>(k * k) / (sigma_cells * sigma_cells));
    total += w[k + r];
  }
  for (double& v : w) v /= total;
  std::vector<double> ext(n + 2 * r);
  for (std::ptrdiff_t i = 0; i < n + 2 * r; ++i) ext[i] = rho[((i - r) % n + n) % n];
  const auto& kern = simd::active();
  Eigen::VectorXd out(n);
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = kern.dot(w.data(), ext.data() + i, w.size());
  return out;
}

}  // namespace gmls
