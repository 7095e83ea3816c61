#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bcg/core.hpp"
#include "bcg/diff.hpp"
#include "bcg/matching.hpp"
#include "bcg/models.hpp"

// Loss assembly for both detectors and the Adam training loop:
// seeded shuffling, fixed-size batches, batch-mean losses, one optimizer
// step per batch. Deterministic for a given (seed, data, config) — the
// thread count changes nothing because gradients reduce over fixed
// sample chunks in index order.

namespace bcg::trainer {

enum class ModelKind { unet, detr };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

struct TrainConfig {
  ModelKind kind = ModelKind::detr;
  double lr = 1e-4;
  int batch_size = 32;
  int epochs = 200;
  double lambda_cls = 1.0;
  double lambda_pt = 5.0;
  double lambda_aux = 1.0;
  double noobj_weight = 0.1;
  std::uint64_t seed = 0;
  int label_halfwidth = 2;
  bool grad_clip = false;       // off by default; divergence rescue only
  double grad_clip_norm = 10.0;
  int threads = 0;              // 0 = hardware concurrency
  int val_every = 10;

  // Validation-time decoding.
  double score_threshold = 0.5;
  double tps_tau = 0.5;
  int tps_delta = 0;  // 0 = round(0.33 * fs)
  int delta_eval = 10;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;          // 1-based
  double train_loss = 0.0;
  double det_loss = 0.0;  // set-prediction runs only
  double aux_loss = 0.0;
  bool has_val = false;
  double val_f1 = 0.0;
  double val_mae_ms = 0.0;
};

using TrainHistory = std::vector<EpochRecord>;

// One preprocessed sample: normalized signal plus rasterized labels.
struct TrainSample {
  std::vector<double> x;
  core::PeakAnnotation ann;
  core::DenseLabels labels;
};

TrainSample make_sample(const core::SignalEpoch& epoch,
                        const core::PeakAnnotation& ann, int label_halfwidth);

// ---- Losses ----

// Mean BCE over all positions (the segmentation training signal).
double seg_loss(const core::ProbabilitySequence& y_hat,
                const core::DenseLabels& y);

// Identical contract; the auxiliary head shares the implementation.
inline double aux_loss(const core::ProbabilitySequence& y_hat,
                       const core::DenseLabels& y) {
  return seg_loss(y_hat, y);
}

// Matched queries: CE toward the peak class + lambda_pt * |t_hat - t_j|;
// unmatched queries: noobj_weight * CE toward non-peak. Normalized by
// max(1, N).
double detection_loss(const models::QueryOutputs& out,
                      const core::PeakAnnotation& gt,
                      const matching::Assignment& assignment, std::size_t T,
                      double lambda_pt, double noobj_weight);

// detection + lambda_aux * aux (aux head required when lambda_aux > 0).
double total_loss(const models::QueryOutputs& out,
                  const core::PeakAnnotation& gt,
                  const core::DenseLabels& labels, std::size_t T,
                  const TrainConfig& cfg);

// Tape-level builders used by the training loop (exposed for the
// gradient-check suite).
diff::Tape::Id seg_loss_node(diff::Tape& tape, diff::Tape::Id probs,
                             const core::DenseLabels& y);
diff::Tape::Id detection_loss_node(diff::Tape& tape,
                                   diff::Tape::Id class_logits,
                                   diff::Tape::Id locations,
                                   const matching::Assignment& assignment,
                                   const core::PeakAnnotation& gt,
                                   std::size_t T, double lambda_pt,
                                   double noobj_weight);

// Softmax peak-class probabilities of query class logits.
std::vector<double> peak_probabilities(const diff::Tensor& class_logits);

// ---- Training ----

struct TrainResult {
  TrainHistory history;
};

TrainResult train_unet(models::UNetModel& model,
                       const std::vector<TrainSample>& train,
                       const std::vector<TrainSample>& val, double fs,
                       const TrainConfig& cfg);

TrainResult train_detr(models::DetrModel& model,
                       const std::vector<TrainSample>& train,
                       const std::vector<TrainSample>& val, double fs,
                       const TrainConfig& cfg);

}  // namespace bcg::trainer
