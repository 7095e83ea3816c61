#include "bcg/metrics.hpp"

#include <cmath>
#include <map>

namespace bcg::metrics {

Prf prf1(long long tp, long long fp, long long fn) {
  if (tp < 0 || fp < 0 || fn < 0) throw InvalidInput("prf1: negative count");
  Prf out;
  out.precision = (tp + fp) > 0 ? static_cast<double>(tp) /
                                      static_cast<double>(tp + fp)
                                : 0.0;
  out.recall = (tp + fn) > 0 ? static_cast<double>(tp) /
                                   static_cast<double>(tp + fn)
                             : 0.0;
  const double pr = out.precision + out.recall;
  out.f1 = pr > 0.0 ? 2.0 * out.precision * out.recall / pr : 0.0;
  return out;
}

MaybeError mae(const std::vector<std::pair<int, int>>& tp_pairs, double fs) {
  MaybeError out;
  if (tp_pairs.empty()) return out;
  double acc = 0.0;
  for (const auto& [p, g] : tp_pairs)
    acc += std::fabs(static_cast<double>(p) - static_cast<double>(g));
  out.has = true;
  out.samples = acc / static_cast<double>(tp_pairs.size());
  out.ms = out.samples * 1000.0 / fs;
  return out;
}

MaybeError rr_err(const matching::ToleranceMatch& match,
                  const core::PeakAnnotation& gt, double fs) {
  // tp_pairs are sorted by ground-truth time, so a linear sweep aligns
  // them with the annotation.
  MaybeError out;
  std::size_t cursor = 0;
  std::vector<int> matched_pred(gt.peaks.size(), -1);
  for (std::size_t j = 0; j < gt.peaks.size(); ++j) {
    while (cursor < match.tp_pairs.size() &&
           match.tp_pairs[cursor].second < gt.peaks[j])
      ++cursor;
    if (cursor < match.tp_pairs.size() &&
        match.tp_pairs[cursor].second == gt.peaks[j])
      matched_pred[j] = match.tp_pairs[cursor].first;
  }

  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t j = 0; j + 1 < gt.peaks.size(); ++j) {
    if (matched_pred[j] < 0 || matched_pred[j + 1] < 0) continue;
    const double rr_pred =
        static_cast<double>(matched_pred[j + 1] - matched_pred[j]);
    const double rr_gt = static_cast<double>(gt.peaks[j + 1] - gt.peaks[j]);
    acc += std::fabs(rr_pred - rr_gt);
    ++n;
  }
  if (n == 0) return out;
  out.has = true;
  out.samples = acc / static_cast<double>(n);
  out.ms = out.samples * 1000.0 / fs;
  return out;
}

long long card_err(std::size_t n_pred, std::size_t n_gt) {
  return std::llabs(static_cast<long long>(n_pred) -
                    static_cast<long long>(n_gt));
}

EpochMetrics evaluate_epoch(const core::DetectionSet& pred,
                            const core::PeakAnnotation& gt, int delta_eval,
                            double fs) {
  const auto match = matching::tolerance_match(pred, gt, delta_eval);
  EpochMetrics m;
  m.tp = static_cast<long long>(match.tp_pairs.size());
  m.fp = static_cast<long long>(match.fp_times.size());
  m.fn = static_cast<long long>(match.fn_times.size());
  m.mae = mae(match.tp_pairs, fs);
  m.rr = rr_err(match, gt, fs);
  m.card_err = card_err(pred.events.size(), gt.peaks.size());
  return m;
}

namespace {

ScopeReport aggregate(const std::string& scope,
                      const std::vector<const EpochMetrics*>& ms) {
  ScopeReport r;
  r.scope = scope;
  r.epochs = ms.size();
  double mae_s = 0.0, mae_ms_acc = 0.0;
  double rr_s = 0.0, rr_ms_acc = 0.0;
  std::size_t n_mae = 0, n_rr = 0;
  double card_acc = 0.0;
  for (const EpochMetrics* m : ms) {
    r.tp += m->tp;
    r.fp += m->fp;
    r.fn += m->fn;
    if (m->mae.has) {
      mae_s += m->mae.samples;
      mae_ms_acc += m->mae.ms;
      ++n_mae;
    }
    if (m->rr.has) {
      rr_s += m->rr.samples;
      rr_ms_acc += m->rr.ms;
      ++n_rr;
    }
    card_acc += static_cast<double>(m->card_err);
  }
  r.prf = prf1(r.tp, r.fp, r.fn);
  if (n_mae > 0) {
    r.mae.has = true;
    r.mae.samples = mae_s / static_cast<double>(n_mae);
    r.mae.ms = mae_ms_acc / static_cast<double>(n_mae);
  }
  if (n_rr > 0) {
    r.rr.has = true;
    r.rr.samples = rr_s / static_cast<double>(n_rr);
    r.rr.ms = rr_ms_acc / static_cast<double>(n_rr);
  }
  if (!ms.empty()) card_acc /= static_cast<double>(ms.size());
  r.card_err_mean = card_acc;
  return r;
}

}  // namespace

DatasetReport evaluate(const std::vector<EpochRef>& refs,
                       const std::vector<core::DetectionSet>& preds,
                       const std::vector<core::PeakAnnotation>& gts,
                       int delta_eval, double fs) {
  if (refs.size() != preds.size() || refs.size() != gts.size())
    throw InvalidInput("evaluate: epoch count mismatch");

  DatasetReport report;
  report.per_epoch.reserve(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i)
    report.per_epoch.emplace_back(
        refs[i], evaluate_epoch(preds[i], gts[i], delta_eval, fs));

  std::vector<const EpochMetrics*> all;
  std::vector<std::string> order;
  std::map<std::string, std::vector<const EpochMetrics*>> by_subject;
  for (const auto& [ref, m] : report.per_epoch) {
    all.push_back(&m);
    if (by_subject.find(ref.subject) == by_subject.end())
      order.push_back(ref.subject);
    by_subject[ref.subject].push_back(&m);
  }

  report.pooled = aggregate("pooled", all);
  for (const std::string& s : order)
    report.per_subject.push_back(aggregate(s, by_subject[s]));
  return report;
}

}  // namespace bcg::metrics
