#include "bcg/models.hpp"

#include <cmath>

namespace bcg::models {

namespace {

using diff::Tape;
using diff::Tensor;

// Xavier-uniform weights; biases start at zero unless a prior is given.
Tensor xavier(std::vector<std::size_t> shape, std::size_t fan_in,
              std::size_t fan_out, rng::Engine& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  const double limit =
      std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& x : t.v) x = (2.0 * rng::uniform01(rng) - 1.0) * limit;
  return t;
}

Tensor gaussian_init(std::vector<std::size_t> shape, double std_dev,
                     rng::Engine& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& x : t.v) x = rng::gaussian(rng) * std_dev;
  return t;
}

// Sparse-target heads start near the label prior instead of 0.5.
constexpr double kSparseHeadBias = -3.0;

struct PadSpec {
  std::size_t left = 0, right = 0, out_len = 0;
};

// "same-ceil" padding: output length ceil(L/s) regardless of kernel.
PadSpec same_ceil(std::size_t L, int k, int s) {
  PadSpec p;
  p.out_len = (L + static_cast<std::size_t>(s) - 1) / static_cast<std::size_t>(s);
  const long total = static_cast<long>((p.out_len - 1) * static_cast<std::size_t>(s)) +
                     k - static_cast<long>(L);
  const std::size_t tot = total > 0 ? static_cast<std::size_t>(total) : 0;
  p.left = tot / 2;
  p.right = tot - p.left;
  return p;
}

// Layer norm over channels of a [C, L] feature map.
Tape::Id ln_channels(Tape& t, Tape::Id x, Tape::Id gamma, Tape::Id beta) {
  return t.transpose(t.layer_norm(t.transpose(x), gamma, beta));
}

std::vector<std::size_t> stage_lengths(const BackboneConfig& cfg,
                                       std::size_t T) {
  std::vector<std::size_t> lens{T};
  for (int i = 0; i < cfg.stages(); ++i) {
    const std::size_t s = static_cast<std::size_t>(cfg.strides[i]);
    lens.push_back((lens.back() + s - 1) / s);
  }
  return lens;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configs
// ---------------------------------------------------------------------------

int BackboneConfig::total_stride() const {
  int s = 1;
  for (int x : strides) s *= x;
  return s;
}

void BackboneConfig::validate() const {
  if (widths.empty() || widths.size() != kernels.size() ||
      widths.size() != strides.size())
    throw InvalidInput("backbone: widths/kernels/strides must align");
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] < 1 || kernels[i] < 1 || strides[i] < 1)
      throw InvalidInput("backbone: widths, kernels and strides must be >= 1");
  }
}

void UNetConfig::validate() const {
  backbone.validate();
  if (decoder_widths.size() != backbone.widths.size())
    throw InvalidInput("unet: decoder_widths must mirror the encoder stages");
  for (int w : decoder_widths)
    if (w < 1) throw InvalidInput("unet: decoder widths must be >= 1");
}

void DetrConfig::validate() const {
  backbone.validate();
  if (d_model < 1 || enc_layers < 1 || dec_layers < 1 || ffn_dim < 1 ||
      num_queries < 1)
    throw InvalidInput("detr: all sizes must be >= 1");
  if (heads < 1 || d_model % heads != 0)
    throw InvalidInput("detr: heads must divide d_model");
}

void DetrConfig::validate_capacity(double epoch_seconds,
                                   double min_rr_seconds) const {
  const double max_beats = epoch_seconds / min_rr_seconds;
  if (static_cast<double>(num_queries) < max_beats)
    throw InvalidInput(
        "detr: num_queries must cover the maximum physiological beat count (" +
        std::to_string(max_beats) + " for this epoch length)");
}

// ---------------------------------------------------------------------------
// Positional encoding
// ---------------------------------------------------------------------------

diff::Tensor positional_encoding(std::size_t T_prime, std::size_t d_model) {
  if (d_model % 2 != 0)
    throw InvalidInput("positional_encoding: d_model must be even");
  Tensor pe = Tensor::matrix(d_model, T_prime);
  for (std::size_t i = 0; 2 * i < d_model; ++i) {
    const double freq =
        std::pow(10000.0, 2.0 * static_cast<double>(i) /
                              static_cast<double>(d_model));
    for (std::size_t t = 0; t < T_prime; ++t) {
      const double arg = static_cast<double>(t) / freq;
      pe.at(2 * i, t) = std::sin(arg);
      pe.at(2 * i + 1, t) = std::cos(arg);
    }
  }
  return pe;
}

// ---------------------------------------------------------------------------
// Backbone
// ---------------------------------------------------------------------------

void Backbone::build(diff::ParamStore& store, const BackboneConfig& cfg,
                     rng::Engine& rng) {
  cfg.validate();
  cfg_ = cfg;
  stages_.clear();
  int cin = 1;
  for (int i = 0; i < cfg.stages(); ++i) {
    const int cout = cfg.widths[static_cast<std::size_t>(i)];
    const int k = cfg.kernels[static_cast<std::size_t>(i)];
    const std::string prefix = "backbone.stage" + std::to_string(i);
    Stage s;
    s.w = store.add(prefix + ".conv.weight",
                    xavier({static_cast<std::size_t>(cout),
                            static_cast<std::size_t>(cin),
                            static_cast<std::size_t>(k)},
                           static_cast<std::size_t>(cin * k),
                           static_cast<std::size_t>(cout * k), rng));
    s.b = store.add(prefix + ".conv.bias",
                    Tensor::zeros({static_cast<std::size_t>(cout)}));
    Tensor ones = Tensor::zeros({static_cast<std::size_t>(cout)});
    for (double& x : ones.v) x = 1.0;
    s.gamma = store.add(prefix + ".norm.gamma", std::move(ones));
    s.beta = store.add(prefix + ".norm.beta",
                       Tensor::zeros({static_cast<std::size_t>(cout)}));
    stages_.push_back(s);
    cin = cout;
  }
}

Backbone::Trace Backbone::forward_trace(diff::Tape& tape,
                                        const std::vector<double>& x) const {
  if (x.empty()) throw InvalidInput("backbone: empty input");
  Trace tr;
  Tensor in = Tensor::zeros({1, x.size()});
  in.v = x;
  Tape::Id cur = tape.constant(std::move(in));
  std::size_t L = x.size();
  for (int i = 0; i < cfg_.stages(); ++i) {
    tr.stage_inputs.push_back(cur);
    tr.stage_input_lengths.push_back(L);
    const Stage& st = stages_[static_cast<std::size_t>(i)];
    const int k = cfg_.kernels[static_cast<std::size_t>(i)];
    const int s = cfg_.strides[static_cast<std::size_t>(i)];
    const PadSpec pad = same_ceil(L, k, s);
    Tape::Id padded = tape.pad_time(cur, pad.left, pad.right);
    Tape::Id conv = tape.conv1d(padded, tape.param(st.w), tape.param(st.b), s, 0);
    Tape::Id normed =
        ln_channels(tape, conv, tape.param(st.gamma), tape.param(st.beta));
    cur = tape.relu(normed);
    L = pad.out_len;
  }
  tr.out = cur;
  return tr;
}

diff::Tape::Id Backbone::forward(diff::Tape& tape,
                                 const std::vector<double>& x) const {
  return forward_trace(tape, x).out;
}

std::size_t Backbone::out_length(const BackboneConfig& cfg, std::size_t T) {
  return stage_lengths(cfg, T).back();
}

long long Backbone::param_count(const BackboneConfig& cfg) {
  long long n = 0;
  long long cin = 1;
  for (int i = 0; i < cfg.stages(); ++i) {
    const long long cout = cfg.widths[static_cast<std::size_t>(i)];
    n += diff::conv1d_params(cin, cout, cfg.kernels[static_cast<std::size_t>(i)]);
    n += diff::layer_norm_params(cout);
    cin = cout;
  }
  return n;
}

long long Backbone::flop_count(const BackboneConfig& cfg, std::size_t T) {
  const auto lens = stage_lengths(cfg, T);
  long long f = 0;
  long long cin = 1;
  for (int i = 0; i < cfg.stages(); ++i) {
    const long long cout = cfg.widths[static_cast<std::size_t>(i)];
    f += diff::conv1d_flops(cin, cout, cfg.kernels[static_cast<std::size_t>(i)],
                            static_cast<long long>(lens[static_cast<std::size_t>(i) + 1]));
    cin = cout;
  }
  return f;
}

// ---------------------------------------------------------------------------
// UNet
// ---------------------------------------------------------------------------

UNetModel::UNetModel(UNetConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  rng::Engine rng(init_seed);
  backbone_.build(store_, cfg_.backbone, rng);

  const int S = cfg_.backbone.stages();
  int prev_ch = cfg_.backbone.widths.back();
  for (int j = 0; j < S; ++j) {
    const int enc_idx = S - 1 - j;
    const int skip_ch = enc_idx == 0 ? 1 : cfg_.backbone.widths[static_cast<std::size_t>(enc_idx - 1)];
    const int k = cfg_.backbone.kernels[static_cast<std::size_t>(enc_idx)];
    const int w = cfg_.decoder_widths[static_cast<std::size_t>(j)];
    const int cin = prev_ch + skip_ch;
    const std::string prefix = "decoder.stage" + std::to_string(j);

    DecStage d;
    d.w0 = store_.add(prefix + ".conv0.weight",
                      xavier({static_cast<std::size_t>(w),
                              static_cast<std::size_t>(cin),
                              static_cast<std::size_t>(k)},
                             static_cast<std::size_t>(cin * k),
                             static_cast<std::size_t>(w * k), rng));
    d.b0 = store_.add(prefix + ".conv0.bias",
                      Tensor::zeros({static_cast<std::size_t>(w)}));
    Tensor ones0 = Tensor::zeros({static_cast<std::size_t>(w)});
    for (double& v : ones0.v) v = 1.0;
    d.g0 = store_.add(prefix + ".norm0.gamma", std::move(ones0));
    d.be0 = store_.add(prefix + ".norm0.beta",
                       Tensor::zeros({static_cast<std::size_t>(w)}));

    d.w1 = store_.add(prefix + ".conv1.weight",
                      xavier({static_cast<std::size_t>(w),
                              static_cast<std::size_t>(w),
                              static_cast<std::size_t>(k)},
                             static_cast<std::size_t>(w * k),
                             static_cast<std::size_t>(w * k), rng));
    d.b1 = store_.add(prefix + ".conv1.bias",
                      Tensor::zeros({static_cast<std::size_t>(w)}));
    Tensor ones1 = Tensor::zeros({static_cast<std::size_t>(w)});
    for (double& v : ones1.v) v = 1.0;
    d.g1 = store_.add(prefix + ".norm1.gamma", std::move(ones1));
    d.be1 = store_.add(prefix + ".norm1.beta",
                       Tensor::zeros({static_cast<std::size_t>(w)}));
    dec_.push_back(d);
    prev_ch = w;
  }

  head_w_ = store_.add(
      "head.conv.weight",
      xavier({1, static_cast<std::size_t>(prev_ch), 1},
             static_cast<std::size_t>(prev_ch), 1, rng));
  Tensor hb = Tensor::zeros({1});
  hb.v[0] = kSparseHeadBias;
  head_b_ = store_.add("head.conv.bias", std::move(hb));
}

diff::Tape::Id UNetModel::forward(diff::Tape& tape,
                                  const std::vector<double>& x) const {
  const Backbone::Trace tr = backbone_.forward_trace(tape, x);
  const int S = cfg_.backbone.stages();

  Tape::Id cur = tr.out;
  for (int j = 0; j < S; ++j) {
    const int enc_idx = S - 1 - j;
    const std::size_t target_len =
        tr.stage_input_lengths[static_cast<std::size_t>(enc_idx)];
    const int k = cfg_.backbone.kernels[static_cast<std::size_t>(enc_idx)];
    const DecStage& d = dec_[static_cast<std::size_t>(j)];

    cur = tape.interp_rows(cur, target_len);
    cur = tape.concat_rows(cur, tr.stage_inputs[static_cast<std::size_t>(enc_idx)]);

    const std::size_t pad_l = static_cast<std::size_t>(k - 1) / 2;
    const std::size_t pad_r = static_cast<std::size_t>(k - 1) - pad_l;
    cur = tape.pad_time(cur, pad_l, pad_r);
    cur = tape.conv1d(cur, tape.param(d.w0), tape.param(d.b0), 1, 0);
    cur = ln_channels(tape, cur, tape.param(d.g0), tape.param(d.be0));
    cur = tape.relu(cur);

    cur = tape.pad_time(cur, pad_l, pad_r);
    cur = tape.conv1d(cur, tape.param(d.w1), tape.param(d.b1), 1, 0);
    cur = ln_channels(tape, cur, tape.param(d.g1), tape.param(d.be1));
    cur = tape.relu(cur);
  }

  Tape::Id logits = tape.conv1d(cur, tape.param(head_w_), tape.param(head_b_), 1, 0);
  return tape.reshape(tape.sigmoid(logits), {x.size()});
}

core::ProbabilitySequence UNetModel::infer(const std::vector<double>& x) const {
  diff::Tape tape(&store_);
  const Tape::Id probs = forward(tape, x);
  core::ProbabilitySequence out;
  out.probs = tape.val(probs).v;
  return out;
}

diff::ModelBudget UNetModel::budget(std::size_t T) const {
  return count_budget_unet(cfg_, T);
}

diff::ModelBudget count_budget_unet(const UNetConfig& cfg, std::size_t T) {
  cfg.validate();
  diff::ModelBudget b;
  b.params_backbone = Backbone::param_count(cfg.backbone);
  b.flops_backbone = Backbone::flop_count(cfg.backbone, T);
  b.params_total = b.params_backbone;
  b.flops_total = b.flops_backbone;

  const auto lens = stage_lengths(cfg.backbone, T);
  const int S = cfg.backbone.stages();
  long long prev_ch = cfg.backbone.widths.back();
  for (int j = 0; j < S; ++j) {
    const int enc_idx = S - 1 - j;
    const long long skip_ch =
        enc_idx == 0 ? 1 : cfg.backbone.widths[static_cast<std::size_t>(enc_idx - 1)];
    const long long k = cfg.backbone.kernels[static_cast<std::size_t>(enc_idx)];
    const long long w = cfg.decoder_widths[static_cast<std::size_t>(j)];
    const long long len = static_cast<long long>(lens[static_cast<std::size_t>(enc_idx)]);
    b.params_total += diff::conv1d_params(prev_ch + skip_ch, w, k);
    b.params_total += diff::conv1d_params(w, w, k);
    b.params_total += 2 * diff::layer_norm_params(w);
    b.flops_total += diff::conv1d_flops(prev_ch + skip_ch, w, k, len);
    b.flops_total += diff::conv1d_flops(w, w, k, len);
    prev_ch = w;
  }
  b.params_total += diff::conv1d_params(prev_ch, 1, 1);
  b.flops_total += diff::conv1d_flops(prev_ch, 1, 1, static_cast<long long>(T));
  return b;
}

// ---------------------------------------------------------------------------
// DETR
// ---------------------------------------------------------------------------

DetrModel::DetrModel(DetrConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  rng::Engine rng(init_seed);
  backbone_.build(store_, cfg_.backbone, rng);

  const std::size_t d = static_cast<std::size_t>(cfg_.d_model);
  const std::size_t c = static_cast<std::size_t>(cfg_.backbone.widths.back());
  const std::size_t ffn = static_cast<std::size_t>(cfg_.ffn_dim);
  const std::size_t K = static_cast<std::size_t>(cfg_.num_queries);

  const auto add_linear = [&](const std::string& name, std::size_t din,
                              std::size_t dout, int& w, int& bias,
                              double bias_init = 0.0) {
    w = store_.add(name + ".weight", xavier({dout, din}, din, dout, rng));
    Tensor bt = Tensor::zeros({dout});
    for (double& v : bt.v) v = bias_init;
    bias = store_.add(name + ".bias", std::move(bt));
  };
  const auto add_norm = [&](const std::string& name, std::size_t dim, Norm& n) {
    Tensor ones = Tensor::zeros({dim});
    for (double& v : ones.v) v = 1.0;
    n.gamma = store_.add(name + ".gamma", std::move(ones));
    n.beta = store_.add(name + ".beta", Tensor::zeros({dim}));
  };
  const auto add_attn = [&](const std::string& name, Attn& a) {
    add_linear(name + ".wq", d, d, a.wq, a.bq);
    add_linear(name + ".wk", d, d, a.wk, a.bk);
    add_linear(name + ".wv", d, d, a.wv, a.bv);
    add_linear(name + ".wo", d, d, a.wo, a.bo);
  };

  add_linear("input_proj", c, d, proj_w_, proj_b_);

  for (int i = 0; i < cfg_.enc_layers; ++i) {
    const std::string prefix = "encoder.layer" + std::to_string(i);
    EncLayer layer;
    add_norm(prefix + ".norm1", d, layer.n1);
    add_attn(prefix + ".self_attn", layer.self_attn);
    add_norm(prefix + ".norm2", d, layer.n2);
    add_linear(prefix + ".ffn.w1", d, ffn, layer.ffn.w1, layer.ffn.b1);
    add_linear(prefix + ".ffn.w2", ffn, d, layer.ffn.w2, layer.ffn.b2);
    enc_.push_back(layer);
  }
  add_norm("encoder.final_norm", d, enc_final_);

  queries_ = store_.add("queries.embed", gaussian_init({K, d}, 1.0, rng));

  for (int i = 0; i < cfg_.dec_layers; ++i) {
    const std::string prefix = "decoder.layer" + std::to_string(i);
    DecLayer layer;
    add_norm(prefix + ".norm1", d, layer.n1);
    add_attn(prefix + ".self_attn", layer.self_attn);
    add_norm(prefix + ".norm2", d, layer.n2);
    add_attn(prefix + ".cross_attn", layer.cross_attn);
    add_norm(prefix + ".norm3", d, layer.n3);
    add_linear(prefix + ".ffn.w1", d, ffn, layer.ffn.w1, layer.ffn.b1);
    add_linear(prefix + ".ffn.w2", ffn, d, layer.ffn.w2, layer.ffn.b2);
    dec_.push_back(layer);
  }
  add_norm("decoder.final_norm", d, dec_final_);

  class_w_ = store_.add("class_head.weight", xavier({2, d}, d, 2, rng));
  {
    // Start the peak class near the sparse prior: p_peak ~ sigmoid(-3).
    Tensor cb = Tensor::zeros({2});
    cb.v[1] = kSparseHeadBias;
    class_b_ = store_.add("class_head.bias", std::move(cb));
  }

  add_linear("loc_head.l0", d, d, loc_w0_, loc_b0_);
  add_linear("loc_head.l1", d, d, loc_w1_, loc_b1_);
  add_linear("loc_head.l2", d, 1, loc_w2_, loc_b2_);

  if (cfg_.aux_head)
    add_linear("aux_head", d, 1, aux_w_, aux_b_, kSparseHeadBias);
}

DetrModel::ForwardIds DetrModel::forward(diff::Tape& tape,
                                         const std::vector<double>& x,
                                         bool with_aux) const {
  const std::size_t T = x.size();
  const std::size_t d = static_cast<std::size_t>(cfg_.d_model);

  const Tape::Id bb = backbone_.forward(tape, x);
  const std::size_t T_prime = tape.val(bb).cols();

  Tape::Id h = tape.linear(tape.transpose(bb), tape.param(proj_w_),
                           tape.param(proj_b_));

  // Positional encoding, already transposed to [T', d].
  {
    const Tensor pe = positional_encoding(T_prime, d);
    Tensor pet = Tensor::matrix(T_prime, d);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t t = 0; t < T_prime; ++t)
        pet.at(t, r) = pe.at(r, t);
    h = tape.add(h, tape.constant(std::move(pet)));
  }

  const auto attn_block = [&](Tape::Id q_in, Tape::Id kv_in, const Attn& a) {
    return multi_head_attention(
        tape, q_in, kv_in, cfg_.heads, tape.param(a.wq), tape.param(a.bq),
        tape.param(a.wk), tape.param(a.bk), tape.param(a.wv), tape.param(a.bv),
        tape.param(a.wo), tape.param(a.bo));
  };
  const auto norm_block = [&](Tape::Id v, const Norm& n) {
    return tape.layer_norm(v, tape.param(n.gamma), tape.param(n.beta));
  };
  const auto ffn_block = [&](Tape::Id v, const Ffn& f) {
    Tape::Id z = tape.relu(tape.linear(v, tape.param(f.w1), tape.param(f.b1)));
    return tape.linear(z, tape.param(f.w2), tape.param(f.b2));
  };

  // Pre-norm encoder.
  for (const EncLayer& layer : enc_) {
    Tape::Id n1 = norm_block(h, layer.n1);
    h = tape.add(h, attn_block(n1, n1, layer.self_attn));
    h = tape.add(h, ffn_block(norm_block(h, layer.n2), layer.ffn));
  }
  const Tape::Id memory = norm_block(h, enc_final_);

  // Pre-norm decoder over the learnable queries.
  Tape::Id q = tape.param(queries_);
  for (const DecLayer& layer : dec_) {
    Tape::Id n1 = norm_block(q, layer.n1);
    q = tape.add(q, attn_block(n1, n1, layer.self_attn));
    q = tape.add(q, attn_block(norm_block(q, layer.n2), memory, layer.cross_attn));
    q = tape.add(q, ffn_block(norm_block(q, layer.n3), layer.ffn));
  }
  const Tape::Id hq = norm_block(q, dec_final_);

  ForwardIds out;
  out.class_logits = tape.linear(hq, tape.param(class_w_), tape.param(class_b_));

  Tape::Id l = tape.relu(tape.linear(hq, tape.param(loc_w0_), tape.param(loc_b0_)));
  l = tape.relu(tape.linear(l, tape.param(loc_w1_), tape.param(loc_b1_)));
  l = tape.linear(l, tape.param(loc_w2_), tape.param(loc_b2_));
  out.locations = tape.reshape(tape.sigmoid(l),
                               {static_cast<std::size_t>(cfg_.num_queries)});

  if (with_aux && cfg_.aux_head) {
    Tape::Id logits = tape.linear(memory, tape.param(aux_w_), tape.param(aux_b_));
    Tape::Id up = tape.interp_rows(tape.transpose(logits), T);
    out.aux_probs = tape.reshape(tape.sigmoid(up), {T});
  }
  return out;
}

QueryOutputs DetrModel::infer(const std::vector<double>& x, bool with_aux) const {
  diff::Tape tape(&store_);
  const ForwardIds ids = forward(tape, x, with_aux);
  QueryOutputs out;
  out.class_logits = tape.val(ids.class_logits);
  out.locations = tape.val(ids.locations).v;
  if (ids.aux_probs >= 0) {
    out.has_aux = true;
    out.aux_probs.probs = tape.val(ids.aux_probs).v;
  }
  return out;
}

std::vector<std::string> DetrModel::aux_param_names() const {
  if (!cfg_.aux_head) return {};
  return {"aux_head.weight", "aux_head.bias"};
}

diff::ModelBudget DetrModel::budget(std::size_t T) const {
  return count_budget_detr(cfg_, T);
}

diff::ModelBudget count_budget_detr(const DetrConfig& cfg, std::size_t T) {
  cfg.validate();
  diff::ModelBudget b;
  b.params_backbone = Backbone::param_count(cfg.backbone);
  b.flops_backbone = Backbone::flop_count(cfg.backbone, T);
  b.params_total = b.params_backbone;
  b.flops_total = b.flops_backbone;

  const long long d = cfg.d_model;
  const long long c = cfg.backbone.widths.back();
  const long long ffn = cfg.ffn_dim;
  const long long K = cfg.num_queries;
  const long long Tp = static_cast<long long>(Backbone::out_length(cfg.backbone, T));

  b.params_total += diff::linear_params(c, d);
  b.flops_total += diff::linear_flops(c, d, Tp);

  // Encoder layers.
  b.params_total += cfg.enc_layers *
                    (2 * diff::layer_norm_params(d) + 4 * diff::linear_params(d, d) +
                     diff::linear_params(d, ffn) + diff::linear_params(ffn, d));
  b.flops_total += cfg.enc_layers *
                   (4 * diff::linear_flops(d, d, Tp) +
                    2 * diff::matmul_flops(Tp, d, Tp) +  // scores + values
                    diff::linear_flops(d, ffn, Tp) + diff::linear_flops(ffn, d, Tp));
  b.params_total += diff::layer_norm_params(d);  // encoder final norm

  b.params_total += K * d;  // query embeddings

  // Decoder layers.
  b.params_total += cfg.dec_layers *
                    (3 * diff::layer_norm_params(d) + 8 * diff::linear_params(d, d) +
                     diff::linear_params(d, ffn) + diff::linear_params(ffn, d));
  b.flops_total += cfg.dec_layers *
                   (4 * diff::linear_flops(d, d, K) +          // self projections
                    2 * diff::matmul_flops(K, d, K) +          // self attention
                    2 * diff::linear_flops(d, d, Tp) +         // cross k/v
                    2 * diff::linear_flops(d, d, K) +          // cross q/out
                    2 * diff::matmul_flops(K, d, Tp) +         // cross attention
                    diff::linear_flops(d, ffn, K) + diff::linear_flops(ffn, d, K));
  b.params_total += diff::layer_norm_params(d);  // decoder final norm

  // Heads.
  b.params_total += diff::linear_params(d, 2);
  b.flops_total += diff::linear_flops(d, 2, K);
  b.params_total += 2 * diff::linear_params(d, d) + diff::linear_params(d, 1);
  b.flops_total += 2 * diff::linear_flops(d, d, K) + diff::linear_flops(d, 1, K);
  if (cfg.aux_head) {
    b.params_total += diff::linear_params(d, 1);
    b.flops_total += diff::linear_flops(d, 1, Tp);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

core::DetectionSet detr_decode(const QueryOutputs& out, double score_threshold,
                               std::size_t T) {
  if (!(score_threshold > 0.0 && score_threshold < 1.0))
    throw InvalidInput("detr_decode: threshold must be in (0,1)");
  const std::size_t K = out.class_logits.rows();
  if (out.locations.size() != K)
    throw InvalidInput("detr_decode: locations/logits mismatch");

  core::DetectionSet det;
  for (std::size_t k = 0; k < K; ++k) {
    const double z0 = out.class_logits.at(k, 0);
    const double z1 = out.class_logits.at(k, 1);
    const double mx = std::max(z0, z1);
    const double e0 = std::exp(z0 - mx);
    const double e1 = std::exp(z1 - mx);
    const double p_peak = e1 / (e0 + e1);
    if (p_peak >= score_threshold) {
      det.events.push_back(
          {core::from_normalized_time(out.locations[k], T), p_peak});
    }
  }
  return det;
}

}  // namespace bcg::models
