// AVX2 kernels. Compiled with -mavx2 only (no -mfma): explicit mul/add
// intrinsics keep rounding identical to the scalar reference. Reduction
// orders match kernels_scalar.cpp; see the contract there.

#include "bcg/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

namespace bcg::kernels {
namespace {

inline double hsum_lanes(__m256d v) {
  // (lane0 + lane1) + (lane2 + lane3)
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  double l0 = _mm_cvtsd_f64(lo);
  double l1 = _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
  double l2 = _mm_cvtsd_f64(hi);
  double l3 = _mm_cvtsd_f64(_mm_unpackhi_pd(hi, hi));
  return (l0 + l1) + (l2 + l3);
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  __m256d s2 = _mm256_setzero_pd();
  __m256d s3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    s0 = _mm256_add_pd(s0, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                         _mm256_loadu_pd(b + i)));
    s1 = _mm256_add_pd(s1, _mm256_mul_pd(_mm256_loadu_pd(a + i + 4),
                                         _mm256_loadu_pd(b + i + 4)));
    s2 = _mm256_add_pd(s2, _mm256_mul_pd(_mm256_loadu_pd(a + i + 8),
                                         _mm256_loadu_pd(b + i + 8)));
    s3 = _mm256_add_pd(s3, _mm256_mul_pd(_mm256_loadu_pd(a + i + 12),
                                         _mm256_loadu_pd(b + i + 12)));
  }
  // lane[L] = (s0[L]+s1[L]) + (s2[L]+s3[L]) == (s_L+s_{L+4})+(s_{L+8}+s_{L+12})
  __m256d lanes = _mm256_add_pd(_mm256_add_pd(s0, s1), _mm256_add_pd(s2, s3));
  double r = hsum_lanes(lanes);
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

void dot4_avx2(const double* a0, const double* a1, const double* a2,
               const double* a3, const double* x, std::size_t n,
               double out[4]) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  __m256d s2 = _mm256_setzero_pd();
  __m256d s3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vx = _mm256_loadu_pd(x + i);
    s0 = _mm256_add_pd(s0, _mm256_mul_pd(_mm256_loadu_pd(a0 + i), vx));
    s1 = _mm256_add_pd(s1, _mm256_mul_pd(_mm256_loadu_pd(a1 + i), vx));
    s2 = _mm256_add_pd(s2, _mm256_mul_pd(_mm256_loadu_pd(a2 + i), vx));
    s3 = _mm256_add_pd(s3, _mm256_mul_pd(_mm256_loadu_pd(a3 + i), vx));
  }
  out[0] = hsum_lanes(s0);
  out[1] = hsum_lanes(s1);
  out[2] = hsum_lanes(s2);
  out[3] = hsum_lanes(s3);
  for (; i < n; ++i) {
    out[0] += a0[i] * x[i];
    out[1] += a1[i] * x[i];
    out[2] += a2[i] * x[i];
    out[3] += a3[i] * x[i];
  }
}

void axpy_avx2(double* y, double a, const double* x, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256d y0 = _mm256_loadu_pd(y + i);
    __m256d y1 = _mm256_loadu_pd(y + i + 4);
    y0 = _mm256_add_pd(y0, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    y1 = _mm256_add_pd(y1, _mm256_mul_pd(va, _mm256_loadu_pd(x + i + 4)));
    _mm256_storeu_pd(y + i, y0);
    _mm256_storeu_pd(y + i + 4, y1);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void axpy4_avx2(double* y0, double* y1, double* y2, double* y3,
                const double a[4], const double* x, std::size_t n) {
  const __m256d a0 = _mm256_set1_pd(a[0]);
  const __m256d a1 = _mm256_set1_pd(a[1]);
  const __m256d a2 = _mm256_set1_pd(a[2]);
  const __m256d a3 = _mm256_set1_pd(a[3]);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vx = _mm256_loadu_pd(x + i);
    _mm256_storeu_pd(
        y0 + i, _mm256_add_pd(_mm256_loadu_pd(y0 + i), _mm256_mul_pd(a0, vx)));
    _mm256_storeu_pd(
        y1 + i, _mm256_add_pd(_mm256_loadu_pd(y1 + i), _mm256_mul_pd(a1, vx)));
    _mm256_storeu_pd(
        y2 + i, _mm256_add_pd(_mm256_loadu_pd(y2 + i), _mm256_mul_pd(a2, vx)));
    _mm256_storeu_pd(
        y3 + i, _mm256_add_pd(_mm256_loadu_pd(y3 + i), _mm256_mul_pd(a3, vx)));
  }
  for (; i < n; ++i) {
    const double xi = x[i];
    y0[i] += a[0] * xi;
    y1[i] += a[1] * xi;
    y2[i] += a[2] * xi;
    y3[i] += a[3] * xi;
  }
}

void saxpy4_avx2(double* y, const double a[4], const double* x0,
                 const double* x1, const double* x2, const double* x3,
                 std::size_t n) {
  const __m256d a0 = _mm256_set1_pd(a[0]);
  const __m256d a1 = _mm256_set1_pd(a[1]);
  const __m256d a2 = _mm256_set1_pd(a[2]);
  const __m256d a3 = _mm256_set1_pd(a[3]);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_loadu_pd(y + i);
    v = _mm256_add_pd(v, _mm256_mul_pd(a0, _mm256_loadu_pd(x0 + i)));
    v = _mm256_add_pd(v, _mm256_mul_pd(a1, _mm256_loadu_pd(x1 + i)));
    v = _mm256_add_pd(v, _mm256_mul_pd(a2, _mm256_loadu_pd(x2 + i)));
    v = _mm256_add_pd(v, _mm256_mul_pd(a3, _mm256_loadu_pd(x3 + i)));
    _mm256_storeu_pd(y + i, v);
  }
  for (; i < n; ++i) {
    double v = y[i];
    v += a[0] * x0[i];
    v += a[1] * x1[i];
    v += a[2] * x2[i];
    v += a[3] * x3[i];
    y[i] = v;
  }
}

void add_avx2(double* out, const double* a, const double* b, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(
        out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_avx2(double* out, const double* a, const double* b, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(
        out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_avx2(double* out, const double* a, const double* b, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(
        out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_avx2(double* out, const double* x, double a, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = a * x[i];
}

double sum_avx2(const double* x, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  __m256d s2 = _mm256_setzero_pd();
  __m256d s3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    s0 = _mm256_add_pd(s0, _mm256_loadu_pd(x + i));
    s1 = _mm256_add_pd(s1, _mm256_loadu_pd(x + i + 4));
    s2 = _mm256_add_pd(s2, _mm256_loadu_pd(x + i + 8));
    s3 = _mm256_add_pd(s3, _mm256_loadu_pd(x + i + 12));
  }
  __m256d lanes = _mm256_add_pd(_mm256_add_pd(s0, s1), _mm256_add_pd(s2, s3));
  double r = hsum_lanes(lanes);
  for (; i < n; ++i) r += x[i];
  return r;
}

}  // namespace

const Ops* avx2_ops() {
  static const Ops ops{
      "avx2",      dot_avx2, dot4_avx2, axpy_avx2, axpy4_avx2, saxpy4_avx2,
      add_avx2,    sub_avx2, mul_avx2,  scale_avx2, sum_avx2,
  };
  return &ops;
}

}  // namespace bcg::kernels

#else

namespace bcg::kernels {
const Ops* avx2_ops() { return nullptr; }
}  // namespace bcg::kernels

#endif
