#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

// Minimal differentiable-computation substrate: dense 64-bit tensors, a
// define-by-run tape with reverse-mode gradients, the Adam optimizer, a
// finite-difference gradient checker, and parameter/FLOP accounting.
//
// One Tape per forward pass; the tape is rebuilt for every loss
// evaluation. Parameters live in a ParamStore that tapes only read, so
// any number of tapes may run concurrently against one store; each tape
// accumulates its parameter gradients locally.

namespace bcg::diff {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> v;

  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor scalar(double x);
  static Tensor vec(std::vector<double> values);
  static Tensor matrix(std::size_t r, std::size_t c);

  std::size_t size() const { return v.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.at(1); }

  double* row(std::size_t r) { return v.data() + r * cols(); }
  const double* row(std::size_t r) const { return v.data() + r * cols(); }
  double& at(std::size_t r, std::size_t c) { return v[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * cols() + c]; }

  bool finite() const;
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;  // same shape as value; zero until a backward pass is merged
};

class ParamStore {
 public:
  int add(std::string name, Tensor value);
  Parameter& at(int id) { return params_[static_cast<std::size_t>(id)]; }
  const Parameter& at(int id) const {
    return params_[static_cast<std::size_t>(id)];
  }
  int find(const std::string& name) const;  // -1 when absent
  std::size_t count() const { return params_.size(); }
  std::size_t total_scalars() const;
  void zero_grads();

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }

 private:
  std::vector<Parameter> params_;
};

class Tape {
 public:
  using Id = int;

  explicit Tape(const ParamStore* store = nullptr) : store_(store) {}

  // Leaves.
  Id constant(Tensor x);       // no gradient tracking
  Id param(int pid);           // reads store->at(pid).value without copying

  // Elementwise / structural.
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mulew(Id a, Id b);
  Id scale(Id a, double c);
  Id relu(Id a);
  Id sigmoid(Id a);
  Id reshape(Id a, std::vector<std::size_t> shape);
  Id transpose(Id a);                          // 2-D
  Id slice_cols(Id a, std::size_t c0, std::size_t c1);
  Id concat_rows(Id a, Id b);                  // stack along dim 0
  Id concat_cols(const std::vector<Id>& xs);   // join along dim 1
  Id pad_time(Id a, std::size_t left, std::size_t right);  // zero-pad cols
  Id interp_rows(Id a, std::size_t out_len);   // per-row linear resample

  // Linear algebra.
  Id matmul(Id a, Id b);      // [M,K]x[K,N]
  Id matmul_nt(Id a, Id b);   // [M,K]x[N,K]^T -> [M,N]
  Id linear(Id x, Id w, Id b);  // rows of x through W: [T,Din]->[T,Dout]
  Id conv1d(Id x, Id w, Id b, int stride, int padding);  // [Cin,L]->[Cout,L']

  // Normalization / attention building blocks.
  Id layer_norm(Id x, Id gamma, Id beta, double eps = 1e-5);  // per row
  Id softmax_rows(Id x);

  // Reductions and losses (all produce scalar nodes).
  Id sum_all(Id a);
  Id mean_all(Id a);
  Id bce_loss(Id probs, Tensor labels);  // mean, probs clamped to [1e-7,1-1e-7]
  Id ce_rows_sum(Id logits, std::vector<int> target, std::vector<double> weight);
  Id l1_pairs_sum(Id values, std::vector<std::pair<std::size_t, double>> pairs);

  const Tensor& val(Id id) const;
  bool tracked(Id id) const;
  std::size_t node_count() const { return nodes_.size(); }

  // Reverse pass from a scalar node; seeds d(loss)/d(loss) = seed.
  // Parameter gradients accumulate into this tape's local buffers.
  void backward(Id loss, double seed = 1.0);

  // Local per-parameter gradients (empty tensor = parameter untouched).
  std::vector<Tensor>& param_grads() { return pgrads_; }
  const Tensor* param_grad(int pid) const;

 private:
  struct Node {
    Tensor val;
    const Tensor* ext = nullptr;  // external storage for param leaves
    Tensor grad;
    int pid = -1;
    bool track = false;
    std::function<void(Tape&)> back;
  };

  Id push(Node n);
  Tensor& grad_buf(Id id);
  void accum(Id parent, const Tensor& g);  // += g if parent is tracked

  std::vector<Node> nodes_;
  const ParamStore* store_ = nullptr;
  std::vector<Tensor> pgrads_;

  friend struct TapeOps;
};

// Multi-head attention from tape primitives: softmax(QK^T/sqrt(dh))V per
// head, heads concatenated, output-projected. kv_in supplies keys and
// values (set kv_in == q_in for self-attention).
Tape::Id multi_head_attention(Tape& t, Tape::Id q_in, Tape::Id kv_in,
                              int heads, Tape::Id wq, Tape::Id bq, Tape::Id wk,
                              Tape::Id bk, Tape::Id wv, Tape::Id bv,
                              Tape::Id wo, Tape::Id bo);

// Plain (non-tape) loss values; same formulas the tape ops use.
double bce(const std::vector<double>& probs, const std::vector<double>& labels);
double ce(const std::vector<double>& logits, int cls);
double l1(const std::vector<double>& a, const std::vector<double>& b);

// ---- Adam ----

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long long t = 0;

  static AdamState init(const ParamStore& store);
};

// One bias-corrected Adam update from the gradients held in `store`.
void adam_step(ParamStore& store, AdamState& state, const AdamConfig& cfg);

// ---- Gradient checking ----

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst;  // "param[index]" of the worst coordinate
};

// Central finite differences against the tape gradients of the scalar
// produced by `build`. Relative error uses denominator
// max(|analytic|, |numeric|, 1e-2); the floor absorbs finite-difference
// noise on near-zero coordinates.
GradCheckResult grad_check(ParamStore& store,
                           const std::function<Tape::Id(Tape&)>& build,
                           double eps = 1e-5);

// ---- Parameter / FLOP accounting ----

// FLOP convention: multiply-accumulates x2 for conv/linear/matmul
// (attention score and value matmuls included); activations,
// normalizations, softmax and interpolation are not counted.
struct ModelBudget {
  long long params_total = 0;
  long long params_backbone = 0;
  long long flops_total = 0;
  long long flops_backbone = 0;
};

long long linear_params(long long din, long long dout, bool bias = true);
long long linear_flops(long long din, long long dout, long long positions);
long long conv1d_params(long long cin, long long cout, long long k,
                        bool bias = true);
long long conv1d_flops(long long cin, long long cout, long long k,
                       long long out_len);
long long matmul_flops(long long m, long long k, long long n);
long long layer_norm_params(long long dim);

}  // namespace bcg::diff
