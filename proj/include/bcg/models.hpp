#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bcg/core.hpp"
#include "bcg/diff.hpp"
#include "bcg/rng.hpp"

// The shared convolutional backbone and the two detectors built on it:
// a dense-segmentation U-Net and a query-based set-prediction model.

namespace bcg::models {

struct BackboneConfig {
  std::vector<int> widths{32, 64, 128};
  std::vector<int> kernels{7, 5, 3};
  std::vector<int> strides{2, 2, 2};

  int stages() const { return static_cast<int>(widths.size()); }
  int total_stride() const;
  void validate() const;
};

struct UNetConfig {
  BackboneConfig backbone;
  // Decoder stage widths, deepest resolution first; mirrors the encoder
  // stage count and reuses its kernel sizes in reverse.
  std::vector<int> decoder_widths{128, 64, 32};

  void validate() const;
};

struct DetrConfig {
  BackboneConfig backbone;
  int d_model = 64;
  int enc_layers = 2;
  int dec_layers = 2;
  int heads = 4;
  int ffn_dim = 128;
  int num_queries = 96;
  bool aux_head = true;  // training-only dense supervision head

  void validate() const;
  // K must dominate the physiological beat-count ceiling for an epoch.
  void validate_capacity(double epoch_seconds, double min_rr_seconds) const;
};

// Per-query outputs of the set-prediction model.
struct QueryOutputs {
  diff::Tensor class_logits;       // [K,2]; column 1 is the peak class
  std::vector<double> locations;   // K normalized times in [0,1]
  core::ProbabilitySequence aux_probs;  // present only when has_aux
  bool has_aux = false;
};

// Fixed sinusoidal encoding, shaped [d_model, T'] (row = dimension):
//   pe[2i,   t] = sin(t / 10000^(2i/d))
//   pe[2i+1, t] = cos(t / 10000^(2i/d))
diff::Tensor positional_encoding(std::size_t T_prime, std::size_t d_model);

// Shared feature extractor: strided conv stages, layer norm over
// channels, ReLU. Output length is ceil(T / total_stride).
class Backbone {
 public:
  void build(diff::ParamStore& store, const BackboneConfig& cfg,
             rng::Engine& rng);

  struct Trace {
    // Input node of each stage (the skip source at that resolution).
    std::vector<diff::Tape::Id> stage_inputs;
    std::vector<std::size_t> stage_input_lengths;
    diff::Tape::Id out = -1;  // [C, T']
  };

  diff::Tape::Id forward(diff::Tape& tape,
                         const std::vector<double>& x) const;
  Trace forward_trace(diff::Tape& tape, const std::vector<double>& x) const;

  static long long param_count(const BackboneConfig& cfg);
  static long long flop_count(const BackboneConfig& cfg, std::size_t T);
  static std::size_t out_length(const BackboneConfig& cfg, std::size_t T);

 private:
  BackboneConfig cfg_;
  struct Stage {
    int w = -1, b = -1, gamma = -1, beta = -1;
  };
  std::vector<Stage> stages_;
};

class UNetModel {
 public:
  UNetModel(UNetConfig cfg, std::uint64_t init_seed);

  const UNetConfig& config() const { return cfg_; }
  diff::ParamStore& params() { return store_; }
  const diff::ParamStore& params() const { return store_; }

  // Dense peak-probability node, shape [T]. Expects a normalized epoch.
  diff::Tape::Id forward(diff::Tape& tape, const std::vector<double>& x) const;
  core::ProbabilitySequence infer(const std::vector<double>& x) const;

  diff::Tape::Id backbone_forward(diff::Tape& tape,
                                  const std::vector<double>& x) const {
    return backbone_.forward(tape, x);
  }

  diff::ModelBudget budget(std::size_t T) const;

 private:
  UNetConfig cfg_;
  diff::ParamStore store_;
  Backbone backbone_;
  struct DecStage {
    int w0 = -1, b0 = -1, g0 = -1, be0 = -1;
    int w1 = -1, b1 = -1, g1 = -1, be1 = -1;
  };
  std::vector<DecStage> dec_;
  int head_w_ = -1, head_b_ = -1;
};

class DetrModel {
 public:
  DetrModel(DetrConfig cfg, std::uint64_t init_seed);

  const DetrConfig& config() const { return cfg_; }
  diff::ParamStore& params() { return store_; }
  const diff::ParamStore& params() const { return store_; }

  struct ForwardIds {
    diff::Tape::Id class_logits = -1;  // [K,2]
    diff::Tape::Id locations = -1;     // [K]
    diff::Tape::Id aux_probs = -1;     // [T] or -1
  };

  // Expects a normalized epoch. with_aux only has effect when the config
  // enables the auxiliary head; the query path is identical either way.
  ForwardIds forward(diff::Tape& tape, const std::vector<double>& x,
                     bool with_aux) const;
  QueryOutputs infer(const std::vector<double>& x, bool with_aux = false) const;

  diff::Tape::Id backbone_forward(diff::Tape& tape,
                                  const std::vector<double>& x) const {
    return backbone_.forward(tape, x);
  }

  diff::ModelBudget budget(std::size_t T) const;

  // Names of the auxiliary-head parameters (for gradient gating checks).
  std::vector<std::string> aux_param_names() const;

 private:
  DetrConfig cfg_;
  diff::ParamStore store_;
  Backbone backbone_;

  struct Attn {
    int wq = -1, bq = -1, wk = -1, bk = -1, wv = -1, bv = -1, wo = -1, bo = -1;
  };
  struct Norm {
    int gamma = -1, beta = -1;
  };
  struct Ffn {
    int w1 = -1, b1 = -1, w2 = -1, b2 = -1;
  };
  struct EncLayer {
    Norm n1;
    Attn self_attn;
    Norm n2;
    Ffn ffn;
  };
  struct DecLayer {
    Norm n1;
    Attn self_attn;
    Norm n2;
    Attn cross_attn;
    Norm n3;
    Ffn ffn;
  };

  int proj_w_ = -1, proj_b_ = -1;
  std::vector<EncLayer> enc_;
  Norm enc_final_;
  int queries_ = -1;
  std::vector<DecLayer> dec_;
  Norm dec_final_;
  int class_w_ = -1, class_b_ = -1;
  int loc_w0_ = -1, loc_b0_ = -1, loc_w1_ = -1, loc_b1_ = -1, loc_w2_ = -1,
      loc_b2_ = -1;
  int aux_w_ = -1, aux_b_ = -1;
};

// Keep every query whose softmax peak probability reaches the threshold;
// no suppression, duplicates included by design.
core::DetectionSet detr_decode(const QueryOutputs& out, double score_threshold,
                               std::size_t T);

// Budget entry points shared by the CLI and the tests.
diff::ModelBudget count_budget_unet(const UNetConfig& cfg, std::size_t T);
diff::ModelBudget count_budget_detr(const DetrConfig& cfg, std::size_t T);

}  // namespace bcg::models
