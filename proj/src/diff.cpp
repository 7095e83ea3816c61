#include "bcg/diff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "bcg/core.hpp"
#include "bcg/kernels.hpp"

namespace bcg::diff {

namespace ker = bcg::kernels;

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  Tensor t;
  t.shape = std::move(shape);
  std::size_t n = 1;
  for (std::size_t s : t.shape) n *= s;
  t.v.assign(n, 0.0);
  return t;
}

Tensor Tensor::scalar(double x) {
  Tensor t;
  t.shape = {1};
  t.v = {x};
  return t;
}

Tensor Tensor::vec(std::vector<double> values) {
  Tensor t;
  t.shape = {values.size()};
  t.v = std::move(values);
  return t;
}

Tensor Tensor::matrix(std::size_t r, std::size_t c) {
  return zeros({r, c});
}

bool Tensor::finite() const {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// ParamStore
// ---------------------------------------------------------------------------

int ParamStore::add(std::string name, Tensor value) {
  if (find(name) >= 0) throw InvalidInput("duplicate parameter: " + name);
  Parameter p;
  p.name = std::move(name);
  p.grad = Tensor::zeros(value.shape);
  p.value = std::move(value);
  params_.push_back(std::move(p));
  return static_cast<int>(params_.size()) - 1;
}

int ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return static_cast<int>(i);
  return -1;
}

std::size_t ParamStore::total_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& p : params_) std::fill(p.grad.v.begin(), p.grad.v.end(), 0.0);
}

// ---------------------------------------------------------------------------
// GEMM helpers (deterministic blocked loops over the dispatch kernels)
// ---------------------------------------------------------------------------

namespace {

// C[M,N] += A[M,K] * B[K,N]
void gemm_nn(double* C, const double* A, const double* B, std::size_t M,
             std::size_t K, std::size_t N) {
  for (std::size_t m = 0; m < M; ++m) {
    double* crow = C + m * N;
    const double* arow = A + m * K;
    std::size_t k = 0;
    for (; k + 4 <= K; k += 4) {
      const double a[4] = {arow[k], arow[k + 1], arow[k + 2], arow[k + 3]};
      ker::saxpy4(crow, a, B + k * N, B + (k + 1) * N, B + (k + 2) * N,
                  B + (k + 3) * N, N);
    }
    for (; k < K; ++k) ker::axpy(crow, arow[k], B + k * N, N);
  }
}

// C[M,N] += A[M,K] * B[N,K]^T
void gemm_nt(double* C, const double* A, const double* B, std::size_t M,
             std::size_t K, std::size_t N) {
  for (std::size_t m = 0; m < M; ++m) {
    const double* arow = A + m * K;
    double* crow = C + m * N;
    std::size_t n = 0;
    for (; n + 4 <= N; n += 4) {
      double out[4];
      ker::dot4(B + n * K, B + (n + 1) * K, B + (n + 2) * K, B + (n + 3) * K,
                arow, K, out);
      crow[n] += out[0];
      crow[n + 1] += out[1];
      crow[n + 2] += out[2];
      crow[n + 3] += out[3];
    }
    for (; n < N; ++n) crow[n] += ker::dot(arow, B + n * K, K);
  }
}

// C[K,N] += A[M,K]^T * B[M,N]
void gemm_tn(double* C, const double* A, const double* B, std::size_t M,
             std::size_t K, std::size_t N) {
  for (std::size_t m = 0; m < M; ++m) {
    const double* arow = A + m * K;
    const double* brow = B + m * N;
    std::size_t k = 0;
    for (; k + 4 <= K; k += 4) {
      const double a[4] = {arow[k], arow[k + 1], arow[k + 2], arow[k + 3]};
      ker::axpy4(C + k * N, C + (k + 1) * N, C + (k + 2) * N, C + (k + 3) * N,
                 a, brow, N);
    }
    for (; k < K; ++k) ker::axpy(C + k * N, arow[k], brow, N);
  }
}

constexpr double kProbClampLo = 1e-7;
constexpr double kProbClampHi = 1.0 - 1e-7;

}  // namespace

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Tape::Id Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size()) - 1;
}

const Tensor& Tape::val(Id id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.ext != nullptr ? *n.ext : n.val;
}

bool Tape::tracked(Id id) const {
  return nodes_[static_cast<std::size_t>(id)].track;
}

Tensor& Tape::grad_buf(Id id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.v.empty()) n.grad = Tensor::zeros(val(id).shape);
  return n.grad;
}

void Tape::accum(Id parent, const Tensor& g) {
  if (!tracked(parent)) return;
  Tensor& gb = grad_buf(parent);
  ker::axpy(gb.v.data(), 1.0, g.v.data(), g.size());
}

Tape::Id Tape::constant(Tensor x) {
  Node n;
  n.val = std::move(x);
  return push(std::move(n));
}

Tape::Id Tape::param(int pid) {
  if (store_ == nullptr) throw InvalidInput("tape has no parameter store");
  Node n;
  n.ext = &store_->at(pid).value;
  n.pid = pid;
  n.track = true;
  return push(std::move(n));
}

Tape::Id Tape::add(Id a, Id b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.shape != tb.shape) throw InvalidInput("add: shape mismatch");
  Node n;
  n.val = Tensor::zeros(ta.shape);
  ker::add(n.val.v.data(), ta.v.data(), tb.v.data(), ta.size());
  n.track = tracked(a) || tracked(b);
  const Id self = static_cast<Id>(nodes_.size());
  if (n.track)
    n.back = [a, b, self](Tape& t) {
      const Tensor& g = t.nodes_[self].grad;
      t.accum(a, g);
      t.accum(b, g);
    };
  return push(std::move(n));
}

Tape::Id Tape::sub(Id a, Id b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.shape != tb.shape) throw InvalidInput("sub: shape mismatch");
  Node n;
  n.val = Tensor::zeros(ta.shape);
  ker::sub(n.val.v.data(), ta.v.data(), tb.v.data(), ta.size());
  n.track = tracked(a) || tracked(b);
  const Id self = static_cast<Id>(nodes_.size());
  if (n.track)
    n.back = [a, b, self](Tape& t) {
      const Tensor& g = t.nodes_[self].grad;
      t.accum(a, g);
      if (t.tracked(b)) {
        Tensor& gb = t.grad_buf(b);
        ker::axpy(gb.v.data(), -1.0, g.v.data(), g.size());
      }
    };
  return push(std::move(n));
}

Tape::Id Tape::mulew(Id a, Id b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.shape != tb.shape) throw InvalidInput("mulew: shape mismatch");
  Node n;
  n.val = Tensor::zeros(ta.shape);
  ker::mul(n.val.v.data(), ta.v.data(), tb.v.data(), ta.size());
  n.track = tracked(a) || tracked(b);
  const Id self = static_cast<Id>(nodes_.size());
  if (n.track)
    n.back = [a, b, self](Tape& t) {
      const Tensor& g = t.nodes_[self].grad;
      if (t.tracked(a)) {
        Tensor& ga = t.grad_buf(a);
        const Tensor& vb = t.val(b);
        for (std::size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] * vb.v[i];
      }
      if (t.tracked(b)) {
        Tensor& gb = t.grad_buf(b);
        const Tensor& va = t.val(a);
        for (std::size_t i = 0; i < g.size(); ++i) gb.v[i] += g.v[i] * va.v[i];
      }
    };
  return push(std::move(n));
}

Tape::Id Tape::scale(Id a, double c) {
  const Tensor& ta = val(a);
  Node n;
  n.val = Tensor::zeros(ta.shape);
  ker::scale(n.val.v.data(), ta.v.data(), c, ta.size());
  n.track = tracked(a);
  const Id self = static_cast<Id>(nodes_.size());
  if (n.track)
    n.back = [a, c, self](Tape& t) {
      const Tensor& g = t.nodes_[self].grad;
      Tensor& ga = t.grad_buf(a);
      ker::axpy(ga.v.data(), c, g.v.data(), g.size());
    };
  return push(std::move(n));
}

Tape::Id Tape::relu(Id a) {
  const Tensor& ta = val(a);
  Node n;
  n.val = Tensor::zeros(ta.shape);
  for (std::size_t i = 0; i < ta.size(); ++i)
    n.val.v[i] = ta.v[i] > 0.0 ? ta.v[i] : 0.0;
  n.track = tracked(a);
  const Id self = static_cast<Id>(nodes_.size());
  if (n.track)
    n.back = [a, self](Tape& t) {
      const Tensor& g = t.nodes_[self].grad;
      const Tensor& va = t.val(a);
      Tensor& ga = t.grad_buf(a);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (va.v[i] > 0.0) ga.v[i] += g.v[i];
    };
  return push(std::move(n));
}

Tape::Id Tape::sigmoid(Id a) {
  const Tensor& ta = val(a);
  Node n;
  n.val = Tensor::zeros(ta.shape);
  for (std::size_t i = 0; i < ta.size(); ++i)
    n.val.v[i] = 1.0 / (1.0 + std::exp(-ta.v[i]));
  n.track = tracked(a);
  const Id self = static_cast<Id>(nodes_.size());
  if (n.track)
    n.back = [a, self](Tape& t) {
      const Tensor& g = t.nodes_[self].grad;
      const Tensor& y = t.nodes_[self].val;
      Tensor& ga = t.grad_buf(a);
      for (std::size_t i = 0; i < g.size(); ++i)
        ga.v[i] += g.v[i] * y.v[i] * (1.0 - y.v[i]);
    };
  return push(std::move(n));
}

Tape::Id Tape::reshape(Id a, std::vector<std::size_t> shape) {
  const Tensor& ta = val(a);
  std::size_t n_elems = 1;
  for (std::size_t s : shape) n_elems *= s;
  if (n_elems != ta.size()) throw InvalidInput("reshape: element count mismatch");
  Node n;
  n.val.shape = std::move(shape);
  n.val.v = ta.v;
  n.track = tracked(a);
  const Id self = static_cast<Id>(nodes_.size());
  if (n.track)
    n.back = [a, self](Tape& t) {
      const Tensor& g = t.nodes_[self].grad;
      Tensor& ga = t.grad_buf(a);
      ker::axpy(ga.v.data(), 1.0, g.v.data(), g.size());
    };
  return push(std::move(n));
}

Tape::Id Tape::transpose(Id a) {
  const Tensor& ta = val(a);
  if (ta.shape.size() != 2) throw InvalidInput("transpose: need 2-D tensor");
  const std::size_t R = ta.rows(), C = ta.cols();
  Node n;
  n.val = Tensor::matrix(C, R);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) n.val.v[c * R + r] = ta.v[r * C + c];
  n.track = tracked(a);
  const Id self = static_cast<Id>(nodes_.size());
  if (n.track)
    n.back = [a, R, C, self](Tape& t) {
      const Tensor& g = t.nodes_[self].grad;
      Tensor& ga = t.grad_buf(a);
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t r = 0; r < R; ++r) ga.v[r * C + c] += g.v[c * R + r];
    };
  return push(std::move(n));
}

Tape::Id Tape::slice_cols(Id a, std::size_t c0, std::size_t c1) {
  const Tensor& ta = val(a);
  if (ta.shape.size() != 2 || c1 > ta.cols() || c0 >= c1)
    throw InvalidInput("slice_cols: bad range");
  const std::size_t R = ta.rows(), C = ta.cols(), W = c1 - c0;
  Node n;
  n.val = Tensor::matrix(R, W);
  for (std::size_t r = 0; r < R; ++r)
    std::memcpy(n.val.row(r), ta.row(r) + c0, W * sizeof(double));
  n.track = tracked(a);
  const Id self = static_cast<Id>(nodes_.size());
  if (n.track)
    n.back = [a, c0, W, C, R, self](Tape& t) {
      const Tensor& g = t.nodes_[self].grad;
      Tensor& ga = t.grad_buf(a);
      for (std::size_t r = 0; r < R; ++r)
        ker::axpy(ga.v.data() + r * C + c0, 1.0, g.v.data() + r * W, W);
    };
  return push(std::move(n));
}

Tape::Id Tape::concat_rows(Id a, Id b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.shape.size() != 2 || tb.shape.size() != 2 || ta.cols() != tb.cols())
    throw InvalidInput("concat_rows: column mismatch");
  const std::size_t Ra = ta.rows(), Rb = tb.rows(), C = ta.cols();
  Node n;
  n.val = Tensor::matrix(Ra + Rb, C);
  std::memcpy(n.val.v.data(), ta.v.data(), ta.size() * sizeof(double));
  std::memcpy(n.val.v.data() + ta.size(), tb.v.data(),
              tb.size() * sizeof(double));
  n.track = tracked(a) || tracked(b);
  const Id self = static_cast<Id>(nodes_.size());
  if (n.track)
    n.back = [a, b, Ra, Rb, C, self](Tape& t) {
      const Tensor& g = t.nodes_[self].grad;
      if (t.tracked(a)) {
        Tensor& ga = t.grad_buf(a);
        ker::axpy(ga.v.data(), 1.0, g.v.data(), Ra * C);
      }
      if (t.tracked(b)) {
        Tensor& gb = t.grad_buf(b);
        ker::axpy(gb.v.data(), 1.0, g.v.data() + Ra * C, Rb * C);
      }
    };
  return push(std::move(n));
}

Tape::Id Tape::concat_cols(const std::vector<Id>& xs) {
  if (xs.empty()) throw InvalidInput("concat_cols: empty input");
  const std::size_t R = val(xs[0]).rows();
  std::size_t Ctot = 0;
  bool track = false;
  for (Id x : xs) {
    const Tensor& tx = val(x);
    if (tx.shape.size() != 2 || tx.rows() != R)
      throw InvalidInput("concat_cols: row mismatch");
    Ctot += tx.cols();
    track = track || tracked(x);
  }
  Node n;
  n.val = Tensor::matrix(R, Ctot);
  std::size_t off = 0;
  for (Id x : xs) {
    const Tensor& tx = val(x);
    for (std::size_t r = 0; r < R; ++r)
      std::memcpy(n.val.row(r) + off, tx.row(r), tx.cols() * sizeof(double));
    off += tx.cols();
  }
  n.track = track;
  const Id self = static_cast<Id>(nodes_.size());
  if (n.track) {
    std::vector<Id> parts = xs;
    n.back = [parts, R, Ctot, self](Tape& t) {
      const Tensor& g = t.nodes_[self].grad;
      std::size_t off = 0;
      for (Id x : parts) {
        const std::size_t w = t.val(x).cols();
        if (t.tracked(x)) {
          Tensor& gx = t.grad_buf(x);
          for (std::size_t r = 0; r < R; ++r)
            ker::axpy(gx.v.data() + r * w, 1.0, g.v.data() + r * Ctot + off, w);
        }
        off += w;
      }
    };
  }
  return push(std::move(n));
}

Tape::Id Tape::pad_time(Id a, std::size_t left, std::size_t right) {
  const Tensor& ta = val(a);
  if (ta.shape.size() != 2) throw InvalidInput("pad_time: need 2-D tensor");
  const std::size_t R = ta.rows(), C = ta.cols();
  const std::size_t Cp = C + left + right;
  Node n;
  n.val = Tensor::matrix(R, Cp);
  for (std::size_t r = 0; r < R; ++r)
    std::memcpy(n.val.row(r) + left, ta.row(r), C * sizeof(double));
  n.track = tracked(a);
  const Id self = static_cast<Id>(nodes_.size());
  if (n.track)
    n.back = [a, left, R, C, Cp, self](Tape& t) {
      const Tensor& g = t.nodes_[self].grad;
      Tensor& ga = t.grad_buf(a);
      for (std::size_t r = 0; r < R; ++r)
        ker::axpy(ga.v.data() + r * C, 1.0, g.v.data() + r * Cp + left, C);
    };
  return push(std::move(n));
}

Tape::Id Tape::interp_rows(Id a, std::size_t out_len) {
  const Tensor& ta = val(a);
  if (ta.shape.size() != 2) throw InvalidInput("interp_rows: need 2-D tensor");
  if (out_len == 0) throw InvalidInput("interp_rows: empty output");
  const std::size_t R = ta.rows(), Lin = ta.cols();

  // Sample positions u = t*(Lin-1)/(out_len-1); endpoints map exactly.
  std::vector<std::size_t> i0(out_len);
  std::vector<double> w(out_len);
  if (Lin == 1 || out_len == 1) {
    for (std::size_t t = 0; t < out_len; ++t) {
      i0[t] = 0;
      w[t] = 0.0;
    }
  } else {
    const double s = static_cast<double>(Lin - 1) / static_cast<double>(out_len - 1);
    for (std::size_t t = 0; t < out_len; ++t) {
      double u = static_cast<double>(t) * s;
      std::size_t lo = static_cast<std::size_t>(u);
      if (lo >= Lin - 1) {
        lo = Lin - 2;
        u = static_cast<double>(Lin - 1);
      }
      i0[t] = lo;
      w[t] = u - static_cast<double>(lo);
    }
  }

  Node n;
  n.val = Tensor::matrix(R, out_len);
  for (std::size_t r = 0; r < R; ++r) {
    const double* src = ta.row(r);
    double* dst = n.val.row(r);
    if (Lin == 1) {
      for (std::size_t t = 0; t < out_len; ++t) dst[t] = src[0];
    } else {
      for (std::size_t t = 0; t < out_len; ++t)
        dst[t] = src[i0[t]] * (1.0 - w[t]) + src[i0[t] + 1] * w[t];
    }
  }
  n.track = tracked(a);
  const Id self = static_cast<Id>(nodes_.size());
  if (n.track)
    n.back = [a, R, Lin, out_len, i0, w, self](Tape& t) {
      const Tensor& g = t.nodes_[self].grad;
      Tensor& ga = t.grad_buf(a);
      for (std::size_t r = 0; r < R; ++r) {
        const double* grow = g.v.data() + r * out_len;
        double* garow = ga.v.data() + r * Lin;
        if (Lin == 1) {
          for (std::size_t tt = 0; tt < out_len; ++tt) garow[0] += grow[tt];
        } else {
          for (std::size_t tt = 0; tt < out_len; ++tt) {
            garow[i0[tt]] += grow[tt] * (1.0 - w[tt]);
            garow[i0[tt] + 1] += grow[tt] * w[tt];
          }
        }
      }
    };
  return push(std::move(n));
}

Tape::Id Tape::matmul(Id a, Id b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.shape.size() != 2 || tb.shape.size() != 2 || ta.cols() != tb.rows())
    throw InvalidInput("matmul: shape mismatch");
  const std::size_t M = ta.rows(), K = ta.cols(), N = tb.cols();
  Node n;
  n.val = Tensor::matrix(M, N);
  gemm_nn(n.val.v.data(), ta.v.data(), tb.v.data(), M, K, N);
  n.track = tracked(a) || tracked(b);
  const Id self = static_cast<Id>(nodes_.size());
  if (n.track)
    n.back = [a, b, M, K, N, self](Tape& t) {
      const Tensor& g = t.nodes_[self].grad;
      if (t.tracked(a)) {
        Tensor& ga = t.grad_buf(a);
        gemm_nt(ga.v.data(), g.v.data(), t.val(b).v.data(), M, N, K);
      }
      if (t.tracked(b)) {
        Tensor& gb = t.grad_buf(b);
        gemm_tn(gb.v.data(), t.val(a).v.data(), g.v.data(), M, K, N);
      }
    };
  return push(std::move(n));
}

Tape::Id Tape::matmul_nt(Id a, Id b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.shape.size() != 2 || tb.shape.size() != 2 || ta.cols() != tb.cols())
    throw InvalidInput("matmul_nt: shape mismatch");
  const std::size_t M = ta.rows(), K = ta.cols(), N = tb.rows();
  Node n;
  n.val = Tensor::matrix(M, N);
  gemm_nt(n.val.v.data(), ta.v.data(), tb.v.data(), M, K, N);
  n.track = tracked(a) || tracked(b);
  const Id self = static_cast<Id>(nodes_.size());
  if (n.track)
    n.back = [a, b, M, K, N, self](Tape& t) {
      const Tensor& g = t.nodes_[self].grad;
      if (t.tracked(a)) {
        Tensor& ga = t.grad_buf(a);
        gemm_nn(ga.v.data(), g.v.data(), t.val(b).v.data(), M, N, K);
      }
      if (t.tracked(b)) {
        Tensor& gb = t.grad_buf(b);
        gemm_tn(gb.v.data(), g.v.data(), t.val(a).v.data(), M, N, K);
      }
    };
  return push(std::move(n));
}

Tape::Id Tape::linear(Id x, Id w, Id b) {
  const Tensor& tx = val(x);
  const Tensor& tw = val(w);
  const Tensor& tb = val(b);
  if (tx.shape.size() != 2 || tw.shape.size() != 2 || tx.cols() != tw.cols())
    throw InvalidInput("linear: shape mismatch");
  const std::size_t T = tx.rows(), Din = tx.cols(), Dout = tw.rows();
  if (tb.size() != Dout) throw InvalidInput("linear: bias size mismatch");
  Node n;
  n.val = Tensor::matrix(T, Dout);
  for (std::size_t t = 0; t < T; ++t)
    std::memcpy(n.val.row(t), tb.v.data(), Dout * sizeof(double));
  gemm_nt(n.val.v.data(), tx.v.data(), tw.v.data(), T, Din, Dout);
  n.track = tracked(x) || tracked(w) || tracked(b);
  const Id self = static_cast<Id>(nodes_.size());
  if (n.track)
    n.back = [x, w, b, T, Din, Dout, self](Tape& t) {
      const Tensor& g = t.nodes_[self].grad;
      if (t.tracked(x)) {
        Tensor& gx = t.grad_buf(x);
        gemm_nn(gx.v.data(), g.v.data(), t.val(w).v.data(), T, Dout, Din);
      }
      if (t.tracked(w)) {
        Tensor& gw = t.grad_buf(w);
        gemm_tn(gw.v.data(), g.v.data(), t.val(x).v.data(), T, Dout, Din);
      }
      if (t.tracked(b)) {
        Tensor& gb = t.grad_buf(b);
        for (std::size_t r = 0; r < T; ++r)
          ker::axpy(gb.v.data(), 1.0, g.v.data() + r * Dout, Dout);
      }
    };
  return push(std::move(n));
}

namespace {

// Split a padded row into `stride` phase streams: phase[ph][j] = xp[ph+j*s].
void build_phases(const double* xp, std::size_t Lp, int stride,
                  std::vector<std::vector<double>>& phases) {
  const std::size_t s = static_cast<std::size_t>(stride);
  phases.resize(s);
  for (std::size_t ph = 0; ph < s; ++ph) {
    const std::size_t len = ph < Lp ? (Lp - ph + s - 1) / s : 0;
    phases[ph].resize(len);
    for (std::size_t j = 0; j < len; ++j) phases[ph][j] = xp[ph + j * s];
  }
}

}  // namespace

Tape::Id Tape::conv1d(Id x, Id w, Id b, int stride, int padding) {
  const Tensor& tx = val(x);
  const Tensor& tw = val(w);
  const Tensor& tb = val(b);
  if (tx.shape.size() != 2 || tw.shape.size() != 3)
    throw InvalidInput("conv1d: expected x[Cin,L], w[Cout,Cin,k]");
  if (stride < 1) throw InvalidInput("conv1d: stride must be >= 1");
  if (padding < 0) throw InvalidInput("conv1d: padding must be >= 0");
  const std::size_t Cin = tx.dim(0), L = tx.dim(1);
  const std::size_t Cout = tw.dim(0), k = tw.dim(2);
  if (tw.dim(1) != Cin) throw InvalidInput("conv1d: channel mismatch");
  if (tb.size() != Cout) throw InvalidInput("conv1d: bias size mismatch");
  const std::size_t Lp = L + 2 * static_cast<std::size_t>(padding);
  if (k > Lp) throw InvalidInput("conv1d: kernel longer than padded input");
  const std::size_t Lout = (Lp - k) / static_cast<std::size_t>(stride) + 1;

  Node n;
  n.val = Tensor::matrix(Cout, Lout);
  double* Y = n.val.v.data();
  for (std::size_t co = 0; co < Cout; ++co)
    std::fill(Y + co * Lout, Y + (co + 1) * Lout, tb.v[co]);

  const std::size_t pad = static_cast<std::size_t>(padding);
  const std::size_t s = static_cast<std::size_t>(stride);

  std::vector<double> xp(Lp);
  std::vector<std::vector<double>> phases;
  for (std::size_t ci = 0; ci < Cin; ++ci) {
    std::fill(xp.begin(), xp.end(), 0.0);
    std::memcpy(xp.data() + pad, tx.row(ci), L * sizeof(double));
    if (s > 1) build_phases(xp.data(), Lp, stride, phases);
    std::size_t co = 0;
    for (; co + 4 <= Cout; co += 4) {
      for (std::size_t k0 = 0; k0 < k; ++k0) {
        const double a[4] = {
            tw.v[((co + 0) * Cin + ci) * k + k0],
            tw.v[((co + 1) * Cin + ci) * k + k0],
            tw.v[((co + 2) * Cin + ci) * k + k0],
            tw.v[((co + 3) * Cin + ci) * k + k0],
        };
        const double* src = s > 1 ? phases[k0 % s].data() + k0 / s
                                  : xp.data() + k0;
        ker::axpy4(Y + (co + 0) * Lout, Y + (co + 1) * Lout,
                   Y + (co + 2) * Lout, Y + (co + 3) * Lout, a, src, Lout);
      }
    }
    for (; co < Cout; ++co) {
      for (std::size_t k0 = 0; k0 < k; ++k0) {
        const double* src = s > 1 ? phases[k0 % s].data() + k0 / s
                                  : xp.data() + k0;
        ker::axpy(Y + co * Lout, tw.v[(co * Cin + ci) * k + k0], src, Lout);
      }
    }
  }

  n.track = tracked(x) || tracked(w) || tracked(b);
  const Id self = static_cast<Id>(nodes_.size());
  if (n.track)
    n.back = [x, w, b, stride, Cin, L, Cout, k, Lp, Lout, pad = padding,
              self](Tape& t) {
      const Tensor& g = t.nodes_[self].grad;
      const Tensor& tx = t.val(x);
      const Tensor& tw = t.val(w);
      const std::size_t s = static_cast<std::size_t>(stride);
      const double* G = g.v.data();

      if (t.tracked(b)) {
        Tensor& gb = t.grad_buf(b);
        for (std::size_t co = 0; co < Cout; ++co)
          gb.v[co] += ker::sum(G + co * Lout, Lout);
      }

      const bool need_x = t.tracked(x);
      const bool need_w = t.tracked(w);
      if (!need_x && !need_w) return;

      Tensor* gx = need_x ? &t.grad_buf(x) : nullptr;
      Tensor* gw = need_w ? &t.grad_buf(w) : nullptr;

      std::vector<double> xp(Lp);
      std::vector<std::vector<double>> phases;
      std::vector<std::vector<double>> dphases;
      for (std::size_t ci = 0; ci < Cin; ++ci) {
        std::fill(xp.begin(), xp.end(), 0.0);
        std::memcpy(xp.data() + static_cast<std::size_t>(pad), tx.row(ci),
                    L * sizeof(double));
        if (s > 1) build_phases(xp.data(), Lp, stride, phases);

        if (need_w) {
          std::size_t co = 0;
          for (; co + 4 <= Cout; co += 4) {
            for (std::size_t k0 = 0; k0 < k; ++k0) {
              const double* src = s > 1 ? phases[k0 % s].data() + k0 / s
                                        : xp.data() + k0;
              double out[4];
              ker::dot4(G + (co + 0) * Lout, G + (co + 1) * Lout,
                        G + (co + 2) * Lout, G + (co + 3) * Lout, src, Lout,
                        out);
              for (int j = 0; j < 4; ++j)
                gw->v[((co + static_cast<std::size_t>(j)) * Cin + ci) * k + k0] +=
                    out[j];
            }
          }
          for (; co < Cout; ++co)
            for (std::size_t k0 = 0; k0 < k; ++k0) {
              const double* src = s > 1 ? phases[k0 % s].data() + k0 / s
                                        : xp.data() + k0;
              gw->v[(co * Cin + ci) * k + k0] +=
                  ker::dot(G + co * Lout, src, Lout);
            }
        }

        if (need_x) {
          dphases.assign(s, {});
          for (std::size_t ph = 0; ph < s; ++ph)
            dphases[ph].assign(ph < Lp ? (Lp - ph + s - 1) / s : 0, 0.0);
          for (std::size_t k0 = 0; k0 < k; ++k0) {
            double* dst = dphases[k0 % s].data() + k0 / s;
            std::size_t co = 0;
            for (; co + 4 <= Cout; co += 4) {
              const double a[4] = {
                  tw.v[((co + 0) * Cin + ci) * k + k0],
                  tw.v[((co + 1) * Cin + ci) * k + k0],
                  tw.v[((co + 2) * Cin + ci) * k + k0],
                  tw.v[((co + 3) * Cin + ci) * k + k0],
              };
              ker::saxpy4(dst, a, G + (co + 0) * Lout, G + (co + 1) * Lout,
                          G + (co + 2) * Lout, G + (co + 3) * Lout, Lout);
            }
            for (; co < Cout; ++co)
              ker::axpy(dst, tw.v[(co * Cin + ci) * k + k0], G + co * Lout,
                        Lout);
          }
          // Phases partition the padded axis; scatter back minus padding.
          double* gxrow = gx->v.data() + ci * L;
          for (std::size_t ph = 0; ph < s; ++ph) {
            const std::vector<double>& dp = dphases[ph];
            for (std::size_t j = 0; j < dp.size(); ++j) {
              const long idx = static_cast<long>(ph + j * s) -
                               static_cast<long>(pad);
              if (idx >= 0 && idx < static_cast<long>(L))
                gxrow[idx] += dp[j];
            }
          }
        }
      }
    };
  return push(std::move(n));
}

Tape::Id Tape::layer_norm(Id x, Id gamma, Id beta, double eps) {
  const Tensor& tx = val(x);
  const Tensor& tg = val(gamma);
  const Tensor& tb = val(beta);
  if (tx.shape.size() != 2) throw InvalidInput("layer_norm: need 2-D tensor");
  const std::size_t T = tx.rows(), D = tx.cols();
  if (tg.size() != D || tb.size() != D)
    throw InvalidInput("layer_norm: affine size mismatch");

  Node n;
  n.val = Tensor::matrix(T, D);
  std::vector<double> xhat(T * D);
  std::vector<double> inv_std(T);
  for (std::size_t t = 0; t < T; ++t) {
    const double* xr = tx.row(t);
    const double mu = ker::sum(xr, D) / static_cast<double>(D);
    double var = 0.0;
    for (std::size_t d = 0; d < D; ++d) {
      const double c = xr[d] - mu;
      var += c * c;
    }
    var /= static_cast<double>(D);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[t] = inv;
    double* xh = xhat.data() + t * D;
    double* yr = n.val.row(t);
    for (std::size_t d = 0; d < D; ++d) {
      xh[d] = (xr[d] - mu) * inv;
      yr[d] = xh[d] * tg.v[d] + tb.v[d];
    }
  }

  n.track = tracked(x) || tracked(gamma) || tracked(beta);
  const Id self = static_cast<Id>(nodes_.size());
  if (n.track)
    n.back = [x, gamma, beta, T, D, xhat = std::move(xhat),
              inv_std = std::move(inv_std), self](Tape& t) {
      const Tensor& g = t.nodes_[self].grad;
      const Tensor& tg = t.val(gamma);
      Tensor* gx = t.tracked(x) ? &t.grad_buf(x) : nullptr;
      Tensor* gg = t.tracked(gamma) ? &t.grad_buf(gamma) : nullptr;
      Tensor* gb = t.tracked(beta) ? &t.grad_buf(beta) : nullptr;
      std::vector<double> dxhat(D);
      for (std::size_t r = 0; r < T; ++r) {
        const double* grow = g.v.data() + r * D;
        const double* xh = xhat.data() + r * D;
        if (gg != nullptr)
          for (std::size_t d = 0; d < D; ++d) gg->v[d] += grow[d] * xh[d];
        if (gb != nullptr) ker::axpy(gb->v.data(), 1.0, grow, D);
        if (gx != nullptr) {
          for (std::size_t d = 0; d < D; ++d) dxhat[d] = grow[d] * tg.v[d];
          const double m1 = ker::sum(dxhat.data(), D) / static_cast<double>(D);
          const double m2 = ker::dot(dxhat.data(), xh, D) / static_cast<double>(D);
          double* gxr = gx->v.data() + r * D;
          const double inv = inv_std[r];
          for (std::size_t d = 0; d < D; ++d)
            gxr[d] += inv * (dxhat[d] - m1 - xh[d] * m2);
        }
      }
    };
  return push(std::move(n));
}

Tape::Id Tape::softmax_rows(Id x) {
  const Tensor& tx = val(x);
  if (tx.shape.size() != 2) throw InvalidInput("softmax_rows: need 2-D tensor");
  const std::size_t T = tx.rows(), D = tx.cols();
  Node n;
  n.val = Tensor::matrix(T, D);
  for (std::size_t t = 0; t < T; ++t) {
    const double* xr = tx.row(t);
    double* yr = n.val.row(t);
    double mx = xr[0];
    for (std::size_t d = 1; d < D; ++d) mx = std::max(mx, xr[d]);
    double z = 0.0;
    for (std::size_t d = 0; d < D; ++d) {
      yr[d] = std::exp(xr[d] - mx);
      z += yr[d];
    }
    const double invz = 1.0 / z;
    for (std::size_t d = 0; d < D; ++d) yr[d] *= invz;
  }
  n.track = tracked(x);
  const Id self = static_cast<Id>(nodes_.size());
  if (n.track)
    n.back = [x, T, D, self](Tape& t) {
      const Tensor& g = t.nodes_[self].grad;
      const Tensor& y = t.nodes_[self].val;
      Tensor& gx = t.grad_buf(x);
      for (std::size_t r = 0; r < T; ++r) {
        const double* grow = g.v.data() + r * D;
        const double* yrow = y.v.data() + r * D;
        double* gxr = gx.v.data() + r * D;
        const double s = ker::dot(grow, yrow, D);
        for (std::size_t d = 0; d < D; ++d)
          gxr[d] += yrow[d] * (grow[d] - s);
      }
    };
  return push(std::move(n));
}

Tape::Id Tape::sum_all(Id a) {
  const Tensor& ta = val(a);
  Node n;
  n.val = Tensor::scalar(ker::sum(ta.v.data(), ta.size()));
  n.track = tracked(a);
  const Id self = static_cast<Id>(nodes_.size());
  if (n.track)
    n.back = [a, self](Tape& t) {
      const double g = t.nodes_[self].grad.v[0];
      Tensor& ga = t.grad_buf(a);
      for (double& x : ga.v) x += g;
    };
  return push(std::move(n));
}

Tape::Id Tape::mean_all(Id a) {
  const Tensor& ta = val(a);
  const double invn = 1.0 / static_cast<double>(ta.size());
  Node n;
  n.val = Tensor::scalar(ker::sum(ta.v.data(), ta.size()) * invn);
  n.track = tracked(a);
  const Id self = static_cast<Id>(nodes_.size());
  if (n.track)
    n.back = [a, invn, self](Tape& t) {
      const double g = t.nodes_[self].grad.v[0] * invn;
      Tensor& ga = t.grad_buf(a);
      for (double& x : ga.v) x += g;
    };
  return push(std::move(n));
}

Tape::Id Tape::bce_loss(Id probs, Tensor labels) {
  const Tensor& tp = val(probs);
  if (tp.size() != labels.size())
    throw InvalidInput("bce_loss: length mismatch");
  const std::size_t n_elems = tp.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n_elems; ++i) {
    const double pc = std::clamp(tp.v[i], kProbClampLo, kProbClampHi);
    const double y = labels.v[i];
    acc -= y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc);
  }
  Node n;
  n.val = Tensor::scalar(acc / static_cast<double>(n_elems));
  n.track = tracked(probs);
  const Id self = static_cast<Id>(nodes_.size());
  if (n.track)
    n.back = [probs, labels = std::move(labels), n_elems, self](Tape& t) {
      const double g = t.nodes_[self].grad.v[0] / static_cast<double>(n_elems);
      const Tensor& tp = t.val(probs);
      Tensor& gp = t.grad_buf(probs);
      for (std::size_t i = 0; i < n_elems; ++i) {
        const double p = tp.v[i];
        if (p <= kProbClampLo || p >= kProbClampHi) continue;  // clamped flat
        const double y = labels.v[i];
        gp.v[i] += g * (-y / p + (1.0 - y) / (1.0 - p));
      }
    };
  return push(std::move(n));
}

Tape::Id Tape::ce_rows_sum(Id logits, std::vector<int> target,
                           std::vector<double> weight) {
  const Tensor& tl = val(logits);
  if (tl.shape.size() != 2) throw InvalidInput("ce_rows_sum: need 2-D logits");
  const std::size_t K = tl.rows(), C = tl.cols();
  if (target.size() != K || weight.size() != K)
    throw InvalidInput("ce_rows_sum: target/weight size mismatch");
  for (int c : target)
    if (c < 0 || static_cast<std::size_t>(c) >= C)
      throw InvalidInput("ce_rows_sum: class index out of range");

  std::vector<double> probs(K * C);
  double acc = 0.0;
  for (std::size_t r = 0; r < K; ++r) {
    const double* lr = tl.row(r);
    double mx = lr[0];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, lr[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      probs[r * C + c] = std::exp(lr[c] - mx);
      z += probs[r * C + c];
    }
    const double invz = 1.0 / z;
    for (std::size_t c = 0; c < C; ++c) probs[r * C + c] *= invz;
    acc += weight[r] * (std::log(z) + mx - lr[static_cast<std::size_t>(target[r])]);
  }

  Node n;
  n.val = Tensor::scalar(acc);
  n.track = tracked(logits);
  const Id self = static_cast<Id>(nodes_.size());
  if (n.track)
    n.back = [logits, K, C, target = std::move(target),
              weight = std::move(weight), probs = std::move(probs),
              self](Tape& t) {
      const double g = t.nodes_[self].grad.v[0];
      Tensor& gl = t.grad_buf(logits);
      for (std::size_t r = 0; r < K; ++r) {
        const double wg = g * weight[r];
        for (std::size_t c = 0; c < C; ++c) {
          const double delta =
              c == static_cast<std::size_t>(target[r]) ? 1.0 : 0.0;
          gl.v[r * C + c] += wg * (probs[r * C + c] - delta);
        }
      }
    };
  return push(std::move(n));
}

Tape::Id Tape::l1_pairs_sum(Id values,
                            std::vector<std::pair<std::size_t, double>> pairs) {
  const Tensor& tv = val(values);
  double acc = 0.0;
  for (const auto& [idx, target] : pairs) {
    if (idx >= tv.size()) throw InvalidInput("l1_pairs_sum: index out of range");
    acc += std::fabs(tv.v[idx] - target);
  }
  Node n;
  n.val = Tensor::scalar(acc);
  n.track = tracked(values);
  const Id self = static_cast<Id>(nodes_.size());
  if (n.track)
    n.back = [values, pairs = std::move(pairs), self](Tape& t) {
      const double g = t.nodes_[self].grad.v[0];
      const Tensor& tv = t.val(values);
      Tensor& gv = t.grad_buf(values);
      for (const auto& [idx, target] : pairs) {
        const double d = tv.v[idx] - target;
        if (d > 0.0)
          gv.v[idx] += g;
        else if (d < 0.0)
          gv.v[idx] -= g;
      }
    };
  return push(std::move(n));
}

void Tape::backward(Id loss, double seed) {
  if (val(loss).size() != 1)
    throw InvalidInput("backward: loss must be a scalar");
  if (!nodes_[static_cast<std::size_t>(loss)].track) return;
  if (store_ != nullptr && pgrads_.size() < store_->count())
    pgrads_.resize(store_->count());
  grad_buf(loss).v[0] = seed;
  for (Id i = loss; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.track || n.grad.v.empty()) continue;
    if (n.pid >= 0) {
      Tensor& pg = pgrads_[static_cast<std::size_t>(n.pid)];
      if (pg.v.empty()) pg = Tensor::zeros(val(i).shape);
      ker::axpy(pg.v.data(), 1.0, n.grad.v.data(), n.grad.size());
      continue;
    }
    if (n.back) n.back(*this);
  }
}

const Tensor* Tape::param_grad(int pid) const {
  const std::size_t i = static_cast<std::size_t>(pid);
  if (i >= pgrads_.size() || pgrads_[i].v.empty()) return nullptr;
  return &pgrads_[i];
}

// ---------------------------------------------------------------------------
// Multi-head attention
// ---------------------------------------------------------------------------

Tape::Id multi_head_attention(Tape& t, Tape::Id q_in, Tape::Id kv_in,
                              int heads, Tape::Id wq, Tape::Id bq, Tape::Id wk,
                              Tape::Id bk, Tape::Id wv, Tape::Id bv,
                              Tape::Id wo, Tape::Id bo) {
  const std::size_t D = t.val(q_in).cols();
  if (heads < 1 || D % static_cast<std::size_t>(heads) != 0)
    throw InvalidInput("multi_head_attention: heads must divide model dim");
  const std::size_t dh = D / static_cast<std::size_t>(heads);
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));

  const Tape::Id q = t.linear(q_in, wq, bq);
  const Tape::Id k = t.linear(kv_in, wk, bk);
  const Tape::Id v = t.linear(kv_in, wv, bv);

  std::vector<Tape::Id> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const std::size_t c0 = static_cast<std::size_t>(h) * dh;
    const Tape::Id qh = t.slice_cols(q, c0, c0 + dh);
    const Tape::Id kh = t.slice_cols(k, c0, c0 + dh);
    const Tape::Id vh = t.slice_cols(v, c0, c0 + dh);
    const Tape::Id attn = t.softmax_rows(t.scale(t.matmul_nt(qh, kh), sc));
    outs.push_back(t.matmul(attn, vh));
  }
  return t.linear(t.concat_cols(outs), wo, bo);
}

// ---------------------------------------------------------------------------
// Plain losses
// ---------------------------------------------------------------------------

double bce(const std::vector<double>& probs, const std::vector<double>& labels) {
  if (probs.size() != labels.size()) throw InvalidInput("bce: length mismatch");
  if (probs.empty()) throw InvalidInput("bce: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double pc = std::clamp(probs[i], kProbClampLo, kProbClampHi);
    acc -= labels[i] * std::log(pc) + (1.0 - labels[i]) * std::log(1.0 - pc);
  }
  return acc / static_cast<double>(probs.size());
}

double ce(const std::vector<double>& logits, int cls) {
  if (logits.empty()) throw InvalidInput("ce: empty logits");
  if (cls < 0 || static_cast<std::size_t>(cls) >= logits.size())
    throw InvalidInput("ce: class index out of range");
  double mx = logits[0];
  for (double z : logits) mx = std::max(mx, z);
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  return std::log(z) + mx - logits[static_cast<std::size_t>(cls)];
}

double l1(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw InvalidInput("l1: length mismatch");
  if (a.empty()) throw InvalidInput("l1: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::fabs(a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

AdamState AdamState::init(const ParamStore& store) {
  AdamState s;
  s.m.reserve(store.count());
  s.v.reserve(store.count());
  for (const auto& p : store.all()) {
    s.m.push_back(Tensor::zeros(p.value.shape));
    s.v.push_back(Tensor::zeros(p.value.shape));
  }
  return s;
}

void adam_step(ParamStore& store, AdamState& state, const AdamConfig& cfg) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < store.count(); ++i) {
    Parameter& p = store.at(static_cast<int>(i));
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad.v[j];
      m.v[j] = cfg.beta1 * m.v[j] + (1.0 - cfg.beta1) * g;
      v.v[j] = cfg.beta2 * v.v[j] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m.v[j] / bc1;
      const double vhat = v.v[j] / bc2;
      p.value.v[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

GradCheckResult grad_check(ParamStore& store,
                           const std::function<Tape::Id(Tape&)>& build,
                           double eps) {
  if (!(eps > 0.0)) throw InvalidInput("grad_check: eps must be > 0");

  std::vector<Tensor> analytic;
  {
    Tape tape(&store);
    const Tape::Id loss = build(tape);
    tape.backward(loss);
    analytic = tape.param_grads();
    analytic.resize(store.count());
  }

  const auto eval = [&]() {
    Tape tape(&store);
    return tape.val(build(tape)).v[0];
  };

  GradCheckResult res;
  for (std::size_t pi = 0; pi < store.count(); ++pi) {
    Parameter& p = store.at(static_cast<int>(pi));
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double orig = p.value.v[j];
      p.value.v[j] = orig + eps;
      const double fp = eval();
      p.value.v[j] = orig - eps;
      const double fm = eval();
      p.value.v[j] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double analytic_g =
          analytic[pi].v.empty() ? 0.0 : analytic[pi].v[j];
      const double denom =
          std::max({std::fabs(analytic_g), std::fabs(numeric), 1e-2});
      const double rel = std::fabs(analytic_g - numeric) / denom;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst = p.name + "[" + std::to_string(j) + "]";
      }
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Budget helpers
// ---------------------------------------------------------------------------

long long linear_params(long long din, long long dout, bool bias) {
  return din * dout + (bias ? dout : 0);
}

long long linear_flops(long long din, long long dout, long long positions) {
  return 2 * din * dout * positions;
}

long long conv1d_params(long long cin, long long cout, long long k, bool bias) {
  return cin * cout * k + (bias ? cout : 0);
}

long long conv1d_flops(long long cin, long long cout, long long k,
                       long long out_len) {
  return 2 * cin * cout * k * out_len;
}

long long matmul_flops(long long m, long long k, long long n) {
  return 2 * m * k * n;
}

long long layer_norm_params(long long dim) { return 2 * dim; }

}  // namespace bcg::diff
