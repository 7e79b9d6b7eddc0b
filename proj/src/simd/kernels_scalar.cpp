#include "gmlsnet/simd.hpp"

#include <cmath>

namespace gmls::simd {
namespace {

double dot(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += x[k] * y[k];
  return s;
}

double gather_dot(const double* w, const double* values, const std::uint32_t* idx,
                  std::size_t n) {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += w[k] * values[idx[k]];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) y[k] += alpha * x[k];
}

void scatter_axpy(double alpha, const double* w, const std::uint32_t* idx, double* out,
                  std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) out[idx[k]] += alpha * w[k];
}

void weighted_outer_accumulate(double w, const double* phi, double* m, std::size_t q) {
  for (std::size_t a = 0; a < q; ++a) {
    const double wa = w * phi[a];
    for (std::size_t b = 0; b < q; ++b) m[a * q + b] += wa * phi[b];
  }
}

void periodic_step(double* x, const double* noise, double scale, double period,
                   std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    double v = x[k] + scale * noise[k];
    v -= period * std::floor(v / period);
    // floor can round v/period up to 1 for tiny negative v
    if (v >= period) v -= period;
    x[k] = v;
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{Isa::scalar, dot,          gather_dot,
                                 axpy,        scatter_axpy, weighted_outer_accumulate,
                                 periodic_step};
  return table;
}

}  // namespace gmls::simd
