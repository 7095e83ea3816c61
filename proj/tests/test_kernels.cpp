#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bcg/kernels.hpp"
#include "bcg/rng.hpp"
#include "testutil.hpp"

namespace ker = bcg::kernels;

// The AVX2 variants must be bit-identical to the scalar reference on
// every size, including ragged tails. Exact equality, not tolerance.

namespace {

bool have_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  return ker::avx2_ops() != nullptr && __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

}  // namespace

TEST_CASE("scalar and avx2 kernels agree bit for bit") {
  if (!have_avx2()) {
    MESSAGE("AVX2 unavailable; dispatch falls back to scalar");
    return;
  }
  const ker::Ops& s = ker::scalar_ops();
  const ker::Ops& a = *ker::avx2_ops();
  bcg::rng::Engine g(123);

  for (std::size_t n :
       {std::size_t(0), std::size_t(1), std::size_t(3), std::size_t(4),
        std::size_t(5), std::size_t(15), std::size_t(16), std::size_t(17),
        std::size_t(64), std::size_t(1023), std::size_t(1330)}) {
    const auto x = testutil::random_vec(g, n);
    const auto y = testutil::random_vec(g, n);
    const auto z0 = testutil::random_vec(g, n);
    const auto z1 = testutil::random_vec(g, n);
    const auto z2 = testutil::random_vec(g, n);
    const auto z3 = testutil::random_vec(g, n);
    const double c[4] = {0.7, -1.3, 0.01, 2.5};

    CHECK(s.dot(x.data(), y.data(), n) == a.dot(x.data(), y.data(), n));
    CHECK(s.sum(x.data(), n) == a.sum(x.data(), n));

    {
      double os[4], oa[4];
      s.dot4(z0.data(), z1.data(), z2.data(), z3.data(), x.data(), n, os);
      a.dot4(z0.data(), z1.data(), z2.data(), z3.data(), x.data(), n, oa);
      for (int i = 0; i < 4; ++i) CHECK(os[i] == oa[i]);
    }

    {
      auto ys = y, ya = y;
      s.axpy(ys.data(), 0.37, x.data(), n);
      a.axpy(ya.data(), 0.37, x.data(), n);
      CHECK(ys == ya);
    }

    {
      auto s0 = z0, s1v = z1, s2v = z2, s3v = z3;
      auto a0 = z0, a1v = z1, a2v = z2, a3v = z3;
      s.axpy4(s0.data(), s1v.data(), s2v.data(), s3v.data(), c, x.data(), n);
      a.axpy4(a0.data(), a1v.data(), a2v.data(), a3v.data(), c, x.data(), n);
      CHECK(s0 == a0);
      CHECK(s1v == a1v);
      CHECK(s2v == a2v);
      CHECK(s3v == a3v);
    }

    {
      auto ys = y, ya = y;
      s.saxpy4(ys.data(), c, z0.data(), z1.data(), z2.data(), z3.data(), n);
      a.saxpy4(ya.data(), c, z0.data(), z1.data(), z2.data(), z3.data(), n);
      CHECK(ys == ya);
    }

    {
      std::vector<double> os(n), oa(n);
      s.add(os.data(), x.data(), y.data(), n);
      a.add(oa.data(), x.data(), y.data(), n);
      CHECK(os == oa);
      s.sub(os.data(), x.data(), y.data(), n);
      a.sub(oa.data(), x.data(), y.data(), n);
      CHECK(os == oa);
      s.mul(os.data(), x.data(), y.data(), n);
      a.mul(oa.data(), x.data(), y.data(), n);
      CHECK(os == oa);
      s.scale(os.data(), x.data(), -0.9, n);
      a.scale(oa.data(), x.data(), -0.9, n);
      CHECK(os == oa);
    }
  }
}

TEST_CASE("dot matches a plain sequential reference within rounding") {
  bcg::rng::Engine g(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + bcg::rng::below(g, 300);
    const auto x = testutil::random_vec(g, n);
    const auto y = testutil::random_vec(g, n);
    double ref = 0.0;
    for (std::size_t i = 0; i < n; ++i) ref += x[i] * y[i];
    const double got = ker::dot(x.data(), y.data(), n);
    CHECK(got == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("axpy4 equals four independent axpy calls") {
  bcg::rng::Engine g(11);
  const std::size_t n = 137;
  const auto x = testutil::random_vec(g, n);
  auto y0 = testutil::random_vec(g, n);
  auto y1 = testutil::random_vec(g, n);
  auto y2 = testutil::random_vec(g, n);
  auto y3 = testutil::random_vec(g, n);
  auto r0 = y0, r1 = y1, r2 = y2, r3 = y3;
  const double a[4] = {1.5, -0.25, 0.0, 3.0};

  ker::axpy4(y0.data(), y1.data(), y2.data(), y3.data(), a, x.data(), n);
  ker::axpy(r0.data(), a[0], x.data(), n);
  ker::axpy(r1.data(), a[1], x.data(), n);
  ker::axpy(r2.data(), a[2], x.data(), n);
  ker::axpy(r3.data(), a[3], x.data(), n);
  CHECK(y0 == r0);
  CHECK(y1 == r1);
  CHECK(y2 == r2);
  CHECK(y3 == r3);
}

TEST_CASE("active dispatch picks a valid table") {
  const ker::Ops& ops = ker::active();
  CHECK((std::string(ops.name) == "scalar" || std::string(ops.name) == "avx2"));
  const double x[3] = {1.0, 2.0, 3.0};
  CHECK(ops.sum(x, 3) == 6.0);
}
