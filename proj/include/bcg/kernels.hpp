#pragma once

#include <cstddef>

// Low-level numeric kernels behind the tensor/autograd layer.
//
// Every kernel exists in a scalar reference form and (on x86_64) an AVX2
// form selected at runtime. The two are bit-identical: reductions use the
// same 4-lane striped accumulation order in both implementations, and no
// FMA contraction is used anywhere, so switching implementations never
// changes a single bit of any result.

namespace bcg::kernels {

struct Ops {
  const char* name;

  // sum_i a[i]*b[i], 4-lane striped accumulation.
  double (*dot)(const double* a, const double* b, std::size_t n);

  // out[r] = sum_i a_r[i]*x[i] for four rows sharing one x stream.
  void (*dot4)(const double* a0, const double* a1, const double* a2,
               const double* a3, const double* x, std::size_t n,
               double out[4]);

  // y[i] += a*x[i]
  void (*axpy)(double* y, double a, const double* x, std::size_t n);

  // y_r[i] += a[r]*x[i] for four destination rows sharing one x stream.
  void (*axpy4)(double* y0, double* y1, double* y2, double* y3,
                const double a[4], const double* x, std::size_t n);

  // y[i] += a0*x0[i] + a1*x1[i] + a2*x2[i] + a3*x3[i]
  void (*saxpy4)(double* y, const double a[4], const double* x0,
                 const double* x1, const double* x2, const double* x3,
                 std::size_t n);

  void (*add)(double* out, const double* a, const double* b, std::size_t n);
  void (*sub)(double* out, const double* a, const double* b, std::size_t n);
  void (*mul)(double* out, const double* a, const double* b, std::size_t n);

  // out[i] = a*x[i]
  void (*scale)(double* out, const double* x, double a, std::size_t n);

  // sum_i x[i], 4-lane striped accumulation.
  double (*sum)(const double* x, std::size_t n);
};

// Scalar reference implementation; always available.
const Ops& scalar_ops();

// AVX2 implementation, or nullptr when not compiled for this architecture.
const Ops* avx2_ops();

// Table picked at startup: AVX2 when the CPU supports it, scalar otherwise.
// The BCG_KERNELS environment variable ("scalar" / "avx2") overrides.
const Ops& active();

// Convenience forwarding wrappers.
inline double dot(const double* a, const double* b, std::size_t n) {
  return active().dot(a, b, n);
}
inline void dot4(const double* a0, const double* a1, const double* a2,
                 const double* a3, const double* x, std::size_t n,
                 double out[4]) {
  active().dot4(a0, a1, a2, a3, x, n, out);
}
inline void axpy(double* y, double a, const double* x, std::size_t n) {
  active().axpy(y, a, x, n);
}
inline void axpy4(double* y0, double* y1, double* y2, double* y3,
                  const double a[4], const double* x, std::size_t n) {
  active().axpy4(y0, y1, y2, y3, a, x, n);
}
inline void saxpy4(double* y, const double a[4], const double* x0,
                   const double* x1, const double* x2, const double* x3,
                   std::size_t n) {
  active().saxpy4(y, a, x0, x1, x2, x3, n);
}
inline void add(double* out, const double* a, const double* b, std::size_t n) {
  active().add(out, a, b, n);
}
inline void sub(double* out, const double* a, const double* b, std::size_t n) {
  active().sub(out, a, b, n);
}
inline void mul(double* out, const double* a, const double* b, std::size_t n) {
  active().mul(out, a, b, n);
}
inline void scale(double* out, const double* x, double a, std::size_t n) {
  active().scale(out, x, a, n);
}
inline double sum(const double* x, std::size_t n) {
  return active().sum(x, n);
}

}  // namespace bcg::kernels
