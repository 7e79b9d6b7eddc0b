// Compiled with -mavx2 -mfma. Must not include Eigen or any header whose inline
// functions could be instantiated with AVX encodings and leak into other TUs.
#include <immintrin.h>

#include <cmath>

#include "gmlsnet/simd.hpp"

namespace gmls::simd {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + k), _mm256_loadu_pd(y + k), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + k + 4), _mm256_loadu_pd(y + k + 4), acc1);
  }
  for (; k + 4 <= n; k += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + k), _mm256_loadu_pd(y + k), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; k < n; ++k) s += x[k] * y[k];
  return s;
}

double gather_dot(const double* w, const double* values, const std::uint32_t* idx,
                  std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    __m128i vi = _mm_loadu_si128(reinterpret_cast<const __m128i*>(idx + k));
    __m256d v = _mm256_i32gather_pd(values, vi, 8);
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(w + k), v, acc);
  }
  double s = hsum(acc);
  for (; k < n; ++k) s += w[k] * values[idx[k]];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d a = _mm256_set1_pd(alpha);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4)
    _mm256_storeu_pd(y + k, _mm256_fmadd_pd(a, _mm256_loadu_pd(x + k), _mm256_loadu_pd(y + k)));
  for (; k < n; ++k) y[k] += alpha * x[k];
}

void scatter_axpy(double alpha, const double* w, const std::uint32_t* idx, double* out,
                  std::size_t n) {
  // AVX2 has no scatter; vectorize the products and store scalar.
  const __m256d a = _mm256_set1_pd(alpha);
  alignas(32) double tmp[4];
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    _mm256_store_pd(tmp, _mm256_mul_pd(a, _mm256_loadu_pd(w + k)));
    out[idx[k]] += tmp[0];
    out[idx[k + 1]] += tmp[1];
    out[idx[k + 2]] += tmp[2];
    out[idx[k + 3]] += tmp[3];
  }
  for (; k < n; ++k) out[idx[k]] += alpha * w[k];
}

void weighted_outer_accumulate(double w, const double* phi, double* m, std::size_t q) {
  for (std::size_t a = 0; a < q; ++a) {
    const double wa = w * phi[a];
    const __m256d va = _mm256_set1_pd(wa);
    double* row = m + a * q;
    std::size_t b = 0;
    for (; b + 4 <= q; b += 4)
      _mm256_storeu_pd(row + b,
                       _mm256_fmadd_pd(va, _mm256_loadu_pd(phi + b), _mm256_loadu_pd(row + b)));
    for (; b < q; ++b) row[b] += wa * phi[b];
  }
}

void periodic_step(double* x, const double* noise, double scale, double period,
                   std::size_t n) {
  const __m256d s = _mm256_set1_pd(scale);
  const __m256d p = _mm256_set1_pd(period);
  const __m256d inv_p = _mm256_set1_pd(1.0 / period);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    __m256d v = _mm256_fmadd_pd(s, _mm256_loadu_pd(noise + k), _mm256_loadu_pd(x + k));
    __m256d f = _mm256_floor_pd(_mm256_mul_pd(v, inv_p));
    v = _mm256_fnmadd_pd(p, f, v);
    // fold any v == period (rounding) or tiny negatives back into range
    __m256d ge = _mm256_cmp_pd(v, p, _CMP_GE_OQ);
    v = _mm256_sub_pd(v, _mm256_and_pd(ge, p));
    __m256d lt = _mm256_cmp_pd(v, _mm256_setzero_pd(), _CMP_LT_OQ);
    v = _mm256_add_pd(v, _mm256_and_pd(lt, p));
    _mm256_storeu_pd(x + k, v);
  }
  for (; k < n; ++k) {
    double v = x[k] + scale * noise[k];
    v -= period * std::floor(v * (1.0 / period));
    if (v >= period) v -= period;
    if (v < 0.0) v += period;
    x[k] = v;
  }
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{Isa::avx2,   dot,          gather_dot,
                                 axpy,        scatter_axpy, weighted_outer_accumulate,
                                 periodic_step};
  return table;
}

}  // namespace gmls::simd
