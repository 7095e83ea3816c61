#include "bcg/kernels.hpp"

// Scalar reference kernels.
//
// Reduction order contract (shared with the AVX2 implementation):
//   dot/sum: 16 striped accumulators s[j] (j = i mod 16), combined as
//            lane[L] = (s[L]+s[L+4]) + (s[L+8]+s[L+12]),  L = 0..3
//            result  = (lane[0]+lane[1]) + (lane[2]+lane[3])
//            then the <16 tail is added sequentially.
//   dot4:    4 striped accumulators per row, combined (s0+s1)+(s2+s3),
//            then the <4 tail per row sequentially.
// Elementwise kernels have no reduction and match trivially.

namespace bcg::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s[16] = {0.0};
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    for (int j = 0; j < 16; ++j) s[j] += a[i + j] * b[i + j];
  }
  double lane[4];
  for (int l = 0; l < 4; ++l)
    lane[l] = (s[l] + s[l + 4]) + (s[l + 8] + s[l + 12]);
  double r = (lane[0] + lane[1]) + (lane[2] + lane[3]);
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

double dot_stripe4(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  double r = (s0 + s1) + (s2 + s3);
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

void dot4_scalar(const double* a0, const double* a1, const double* a2,
                 const double* a3, const double* x, std::size_t n,
                 double out[4]) {
  out[0] = dot_stripe4(a0, x, n);
  out[1] = dot_stripe4(a1, x, n);
  out[2] = dot_stripe4(a2, x, n);
  out[3] = dot_stripe4(a3, x, n);
}

void axpy_scalar(double* y, double a, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void axpy4_scalar(double* y0, double* y1, double* y2, double* y3,
                  const double a[4], const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = x[i];
    y0[i] += a[0] * xi;
    y1[i] += a[1] * xi;
    y2[i] += a[2] * xi;
    y3[i] += a[3] * xi;
  }
}

void saxpy4_scalar(double* y, const double a[4], const double* x0,
                   const double* x1, const double* x2, const double* x3,
                   std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    double v = y[i];
    v += a[0] * x0[i];
    v += a[1] * x1[i];
    v += a[2] * x2[i];
    v += a[3] * x3[i];
    y[i] = v;
  }
}

void add_scalar(double* out, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_scalar(double* out, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_scalar(double* out, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_scalar(double* out, const double* x, double a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i];
}

double sum_scalar(const double* x, std::size_t n) {
  double s[16] = {0.0};
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    for (int j = 0; j < 16; ++j) s[j] += x[i + j];
  }
  double lane[4];
  for (int l = 0; l < 4; ++l)
    lane[l] = (s[l] + s[l + 4]) + (s[l + 8] + s[l + 12]);
  double r = (lane[0] + lane[1]) + (lane[2] + lane[3]);
  for (; i < n; ++i) r += x[i];
  return r;
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops ops{
      "scalar",      dot_scalar, dot4_scalar, axpy_scalar, axpy4_scalar,
      saxpy4_scalar, add_scalar, sub_scalar,  mul_scalar,  scale_scalar,
      sum_scalar,
  };
  return ops;
}

}  // namespace bcg::kernels
