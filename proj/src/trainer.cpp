#include "bcg/trainer.hpp"

#include <atomic>
#include <cmath>
#include <thread>

#include "bcg/kernels.hpp"
#include "bcg/metrics.hpp"
#include "bcg/rng.hpp"
#include "bcg/tps.hpp"

namespace bcg::trainer {

namespace ker = bcg::kernels;
using diff::Tape;

std::string to_string(ModelKind kind) {
  return kind == ModelKind::unet ? "unet" : "detr";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "unet") return ModelKind::unet;
  if (s == "detr") return ModelKind::detr;
  throw InvalidInput("unknown model kind '" + s + "' (expected unet|detr)");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw InvalidInput("train: lr must be > 0");
  if (batch_size < 1) throw InvalidInput("train: batch_size must be >= 1");
  if (epochs < 1) throw InvalidInput("train: epochs must be >= 1");
  if (lambda_cls < 0.0 || lambda_pt < 0.0 || lambda_aux < 0.0 ||
      noobj_weight < 0.0)
    throw InvalidInput("train: loss weights must be >= 0");
  if (label_halfwidth < 0) throw InvalidInput("train: halfwidth must be >= 0");
  if (val_every < 1) throw InvalidInput("train: val_every must be >= 1");
}

TrainSample make_sample(const core::SignalEpoch& epoch,
                        const core::PeakAnnotation& ann, int label_halfwidth) {
  TrainSample s;
  s.x = core::normalize_epoch(epoch).samples;
  s.ann = ann;
  s.labels = core::rasterize_labels(ann, epoch.length(), label_halfwidth);
  return s;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

diff::Tape::Id seg_loss_node(Tape& tape, Tape::Id probs,
                             const core::DenseLabels& y) {
  diff::Tensor labels = diff::Tensor::vec(y.labels);
  if (tape.val(probs).size() != labels.size())
    throw InvalidInput("seg_loss: probability/label length mismatch");
  return tape.bce_loss(probs, std::move(labels));
}

double seg_loss(const core::ProbabilitySequence& y_hat,
                const core::DenseLabels& y) {
  if (y_hat.probs.size() != y.labels.size())
    throw InvalidInput("seg_loss: probability/label length mismatch");
  return diff::bce(y_hat.probs, y.labels);
}

diff::Tape::Id detection_loss_node(Tape& tape, Tape::Id class_logits,
                                   Tape::Id locations,
                                   const matching::Assignment& assignment,
                                   const core::PeakAnnotation& gt,
                                   std::size_t T, double lambda_pt,
                                   double noobj_weight) {
  const std::size_t K = tape.val(class_logits).rows();
  std::vector<int> target(K, 0);
  std::vector<double> weight(K, noobj_weight);
  std::vector<std::pair<std::size_t, double>> loc_pairs;
  loc_pairs.reserve(assignment.pairs.size());
  for (const auto& [k, j] : assignment.pairs) {
    target[k] = 1;
    weight[k] = 1.0;
    loc_pairs.emplace_back(k, core::to_normalized_time(gt.peaks[j], T));
  }
  const std::size_t N = gt.peaks.size();
  Tape::Id ce = tape.ce_rows_sum(class_logits, std::move(target),
                                 std::move(weight));
  Tape::Id loss = tape.add(
      ce, tape.scale(tape.l1_pairs_sum(locations, std::move(loc_pairs)),
                     lambda_pt));
  return tape.scale(loss, 1.0 / static_cast<double>(std::max<std::size_t>(1, N)));
}

double detection_loss(const models::QueryOutputs& out,
                      const core::PeakAnnotation& gt,
                      const matching::Assignment& assignment, std::size_t T,
                      double lambda_pt, double noobj_weight) {
  Tape tape;
  Tape::Id logits = tape.constant(out.class_logits);
  Tape::Id locations = tape.constant(diff::Tensor::vec(out.locations));
  Tape::Id loss = detection_loss_node(tape, logits, locations, assignment, gt,
                                      T, lambda_pt, noobj_weight);
  return tape.val(loss).v[0];
}

std::vector<double> peak_probabilities(const diff::Tensor& class_logits) {
  const std::size_t K = class_logits.rows();
  std::vector<double> probs(K);
  for (std::size_t k = 0; k < K; ++k) {
    const double z0 = class_logits.at(k, 0);
    const double z1 = class_logits.at(k, 1);
    const double mx = std::max(z0, z1);
    const double e0 = std::exp(z0 - mx);
    const double e1 = std::exp(z1 - mx);
    probs[k] = e1 / (e0 + e1);
  }
  return probs;
}

double total_loss(const models::QueryOutputs& out,
                  const core::PeakAnnotation& gt,
                  const core::DenseLabels& labels, std::size_t T,
                  const TrainConfig& cfg) {
  if (cfg.lambda_aux > 0.0 && !out.has_aux)
    throw InvalidInput("total_loss: lambda_aux > 0 requires the aux head");
  const matching::Assignment assignment = matching::match_sets(
      peak_probabilities(out.class_logits), out.locations, gt, T,
      {cfg.lambda_cls, cfg.lambda_pt, false});
  double loss = detection_loss(out, gt, assignment, T, cfg.lambda_pt,
                               cfg.noobj_weight);
  if (cfg.lambda_aux > 0.0)
    loss += cfg.lambda_aux * aux_loss(out.aux_probs, labels);
  return loss;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace {

// Fixed chunk width for gradient reduction. Chunks are merged in index
// order after the parallel section, so results do not depend on the
// thread count.
constexpr std::size_t kChunkSamples = 4;

struct ChunkResult {
  std::vector<diff::Tensor> grads;  // by parameter id; empty = untouched
  double loss = 0.0;
  double det = 0.0;
  double aux = 0.0;
};

void run_chunks(std::size_t n_chunks, int threads,
                const std::function<void(std::size_t)>& fn) {
  const unsigned hw = std::thread::hardware_concurrency();
  std::size_t n_workers = threads > 0 ? static_cast<std::size_t>(threads)
                                      : static_cast<std::size_t>(hw > 0 ? hw : 1);
  n_workers = std::min(n_workers, n_chunks);
  if (n_workers <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) fn(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(n_workers);
  for (std::size_t w = 0; w < n_workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        const std::size_t c = next.fetch_add(1);
        if (c >= n_chunks) return;
        fn(c);
      }
    });
  }
  for (auto& t : pool) t.join();
}

struct BatchStats {
  double loss = 0.0;
  double det = 0.0;
  double aux = 0.0;
};

// Evaluates the batch loss, accumulates gradients into the store, and
// performs one Adam step.
template <typename PerSample>
BatchStats batch_step(diff::ParamStore& store, diff::AdamState& state,
                      const TrainConfig& cfg,
                      const std::vector<std::size_t>& batch,
                      const PerSample& per_sample) {
  const std::size_t B = batch.size();
  const std::size_t n_chunks = (B + kChunkSamples - 1) / kChunkSamples;
  std::vector<ChunkResult> results(n_chunks);

  run_chunks(n_chunks, cfg.threads, [&](std::size_t c) {
    ChunkResult& res = results[c];
    const std::size_t lo = c * kChunkSamples;
    const std::size_t hi = std::min(B, lo + kChunkSamples);
    const double seed = 1.0 / static_cast<double>(B);
    for (std::size_t i = lo; i < hi; ++i) {
      Tape tape(&store);
      per_sample(tape, batch[i], res, seed);
      auto& grads = tape.param_grads();
      if (res.grads.empty()) {
        res.grads = std::move(grads);
        res.grads.resize(store.count());
      } else {
        for (std::size_t p = 0; p < grads.size(); ++p) {
          if (grads[p].v.empty()) continue;
          if (res.grads[p].v.empty())
            res.grads[p] = std::move(grads[p]);
          else
            ker::axpy(res.grads[p].v.data(), 1.0, grads[p].v.data(),
                      grads[p].size());
        }
      }
    }
  });

  store.zero_grads();
  BatchStats stats;
  for (const ChunkResult& res : results) {
    stats.loss += res.loss;
    stats.det += res.det;
    stats.aux += res.aux;
    for (std::size_t p = 0; p < res.grads.size(); ++p) {
      if (res.grads[p].v.empty()) continue;
      diff::Parameter& param = store.at(static_cast<int>(p));
      ker::axpy(param.grad.v.data(), 1.0, res.grads[p].v.data(),
                res.grads[p].size());
    }
  }
  stats.loss /= static_cast<double>(B);
  stats.det /= static_cast<double>(B);
  stats.aux /= static_cast<double>(B);

  if (cfg.grad_clip) {
    double sq = 0.0;
    for (const auto& p : store.all())
      sq += ker::dot(p.grad.v.data(), p.grad.v.data(), p.grad.size());
    const double norm = std::sqrt(sq);
    if (norm > cfg.grad_clip_norm) {
      const double f = cfg.grad_clip_norm / norm;
      for (auto& p : store.all())
        for (double& g : p.grad.v) g *= f;
    }
  }

  diff::AdamConfig acfg;
  acfg.lr = cfg.lr;
  diff::adam_step(store, state, acfg);
  return stats;
}

struct ValMetrics {
  double f1 = 0.0;
  double mae_ms = 0.0;
};

template <typename Detect>
ValMetrics validate_split(const std::vector<TrainSample>& val, int delta_eval,
                          double fs, const Detect& detect) {
  long long tp = 0, fp = 0, fn = 0;
  double mae_acc = 0.0;
  std::size_t mae_n = 0;
  for (const TrainSample& s : val) {
    const core::DetectionSet det = detect(s);
    const metrics::EpochMetrics m =
        metrics::evaluate_epoch(det, s.ann, delta_eval, fs);
    tp += m.tp;
    fp += m.fp;
    fn += m.fn;
    if (m.mae.has) {
      mae_acc += m.mae.ms;
      ++mae_n;
    }
  }
  ValMetrics out;
  out.f1 = metrics::prf1(tp, fp, fn).f1;
  out.mae_ms = mae_n > 0 ? mae_acc / static_cast<double>(mae_n) : 0.0;
  return out;
}

template <typename PerSample, typename Validate>
TrainResult train_loop(diff::ParamStore& store,
                       const std::vector<TrainSample>& train,
                       const TrainConfig& cfg, const PerSample& per_sample,
                       const Validate& validate) {
  cfg.validate();
  if (train.empty()) throw InvalidInput("train: empty training set");

  rng::Engine shuffle_rng(cfg.seed);
  diff::AdamState state = diff::AdamState::init(store);

  TrainResult result;
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int e = 1; e <= cfg.epochs; ++e) {
    rng::shuffle(order, shuffle_rng);

    double loss_acc = 0.0, det_acc = 0.0, aux_acc = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::vector<std::size_t> batch(order.begin() + static_cast<long>(start),
                                           order.begin() + static_cast<long>(end));
      const BatchStats stats = batch_step(store, state, cfg, batch, per_sample);
      if (!std::isfinite(stats.loss))
        throw RuntimeFailure("training diverged (non-finite loss) at epoch " +
                             std::to_string(e));
      loss_acc += stats.loss;
      det_acc += stats.det;
      aux_acc += stats.aux;
      ++n_batches;
    }

    EpochRecord rec;
    rec.epoch = e;
    rec.train_loss = loss_acc / static_cast<double>(n_batches);
    rec.det_loss = det_acc / static_cast<double>(n_batches);
    rec.aux_loss = aux_acc / static_cast<double>(n_batches);
    if (e % cfg.val_every == 0 || e == cfg.epochs) {
      const ValMetrics vm = validate();
      rec.has_val = true;
      rec.val_f1 = vm.f1;
      rec.val_mae_ms = vm.mae_ms;
    }
    result.history.push_back(rec);
  }
  return result;
}

}  // namespace

TrainResult train_unet(models::UNetModel& model,
                       const std::vector<TrainSample>& train,
                       const std::vector<TrainSample>& val, double fs,
                       const TrainConfig& cfg) {
  const auto per_sample = [&](Tape& tape, std::size_t idx, ChunkResult& res,
                              double seed) {
    const TrainSample& s = train[idx];
    Tape::Id probs = model.forward(tape, s.x);
    Tape::Id loss = seg_loss_node(tape, probs, s.labels);
    res.loss += tape.val(loss).v[0];
    tape.backward(loss, seed);
  };

  tps::TpsConfig tcfg;
  tcfg.tau = cfg.tps_tau;
  tcfg.delta = cfg.tps_delta > 0 ? cfg.tps_delta : tps::default_delta(fs);
  const auto validate = [&]() {
    return validate_split(val, cfg.delta_eval, fs, [&](const TrainSample& s) {
      return tps::suppress(model.infer(s.x), tcfg);
    });
  };

  return train_loop(model.params(), train, cfg, per_sample, validate);
}

TrainResult train_detr(models::DetrModel& model,
                       const std::vector<TrainSample>& train,
                       const std::vector<TrainSample>& val, double fs,
                       const TrainConfig& cfg) {
  if (cfg.lambda_aux > 0.0 && !model.config().aux_head)
    throw InvalidInput("train: lambda_aux > 0 requires aux_head in the model");
  const bool use_aux = cfg.lambda_aux > 0.0 && model.config().aux_head;

  const auto per_sample = [&](Tape& tape, std::size_t idx, ChunkResult& res,
                              double seed) {
    const TrainSample& s = train[idx];
    const std::size_t T = s.x.size();
    const models::DetrModel::ForwardIds ids = model.forward(tape, s.x, use_aux);

    const matching::Assignment assignment = matching::match_sets(
        peak_probabilities(tape.val(ids.class_logits)),
        tape.val(ids.locations).v, s.ann, T,
        {cfg.lambda_cls, cfg.lambda_pt, false});

    Tape::Id det = detection_loss_node(tape, ids.class_logits, ids.locations,
                                       assignment, s.ann, T, cfg.lambda_pt,
                                       cfg.noobj_weight);
    Tape::Id loss = det;
    double aux_value = 0.0;
    if (use_aux) {
      Tape::Id aux = seg_loss_node(tape, ids.aux_probs, s.labels);
      aux_value = tape.val(aux).v[0];
      loss = tape.add(det, tape.scale(aux, cfg.lambda_aux));
    }
    const double det_value = tape.val(det).v[0];
    res.det += det_value;
    res.aux += aux_value;
    res.loss += det_value + cfg.lambda_aux * aux_value;
    tape.backward(loss, seed);
  };

  const auto validate = [&]() {
    return validate_split(val, cfg.delta_eval, fs, [&](const TrainSample& s) {
      return models::detr_decode(model.infer(s.x), cfg.score_threshold,
                                 s.x.size());
    });
  };

  return train_loop(model.params(), train, cfg, per_sample, validate);
}

}  // namespace bcg::trainer
