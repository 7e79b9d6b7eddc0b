#pragma once

// Data-parallel inner loops used by the encoder, stencils, filters and the
// particle simulator. Every kernel has a portable scalar reference; an AVX2/FMA
// variant is selected at runtime when the CPU supports it. Set the environment
// variable GMLSNET_SIMD=scalar to force the reference path.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace gmls::simd {

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;
  /// sum_k x[k] * y[k]
  double (*dot)(const double* x, const double* y, std::size_t n);
  /// sum_k w[k] * values[idx[k]]
  double (*gather_dot)(const double* w, const double* values, const std::uint32_t* idx,
                       std::size_t n);
  /// y[k] += alpha * x[k]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  /// out[idx[k]] += alpha * w[k]
  void (*scatter_axpy)(double alpha, const double* w, const std::uint32_t* idx, double* out,
                       std::size_t n);
  /// Row-major q x q: m[a*q + b] += w * phi[a] * phi[b]
  void (*weighted_outer_accumulate)(double w, const double* phi, double* m, std::size_t q);
  /// x[k] = wrap(x[k] + scale * noise[k]) into [0, period)
  void (*periodic_step)(double* x, const double* noise, double scale, double period,
                        std::size_t n);
};

const KernelTable& scalar_kernels();
/// Nullptr when the AVX2 variant was not compiled in or the CPU lacks AVX2/FMA.
const KernelTable* avx2_kernels();

/// The table selected for this process (resolved once, on first call).
const KernelTable& active();

std::string_view isa_name(Isa isa);

}  // namespace gmls::simd
