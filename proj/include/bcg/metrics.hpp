#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bcg/core.hpp"
#include "bcg/matching.hpp"

// Detection metrics: P/R/F1 under a tolerance window, localization MAE,
// RR-interval error, cardinality error, and dataset-level aggregation.

namespace bcg::metrics {

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// 0/0 ratios resolve to 0 by convention.
Prf prf1(long long tp, long long fp, long long fn);

struct MaybeError {
  bool has = false;
  double samples = 0.0;
  double ms = 0.0;
};

// Mean |t_pred - t_gt| over true-positive pairs; absent without pairs.
MaybeError mae(const std::vector<std::pair<int, int>>& tp_pairs, double fs);

// Mean |predicted RR - reference RR| over consecutive ground-truth pairs
// whose endpoints are both matched; absent when no such pair exists.
MaybeError rr_err(const matching::ToleranceMatch& match,
                  const core::PeakAnnotation& gt, double fs);

long long card_err(std::size_t n_pred, std::size_t n_gt);

struct EpochMetrics {
  long long tp = 0, fp = 0, fn = 0;
  MaybeError mae;
  MaybeError rr;
  long long card_err = 0;
};

EpochMetrics evaluate_epoch(const core::DetectionSet& pred,
                            const core::PeakAnnotation& gt, int delta_eval,
                            double fs);

struct EpochRef {
  std::string subject;
  int epoch_index = 0;
};

struct ScopeReport {
  std::string scope;  // "pooled" or a subject id
  std::size_t epochs = 0;
  long long tp = 0, fp = 0, fn = 0;
  Prf prf;            // micro-averaged from the summed counts
  MaybeError mae;     // averaged over epochs possessing a value
  MaybeError rr;
  double card_err_mean = 0.0;  // averaged over all epochs
};

struct DatasetReport {
  ScopeReport pooled;
  std::vector<ScopeReport> per_subject;  // ordered by first appearance
  std::vector<std::pair<EpochRef, EpochMetrics>> per_epoch;
};

DatasetReport evaluate(const std::vector<EpochRef>& refs,
                       const std::vector<core::DetectionSet>& preds,
                       const std::vector<core::PeakAnnotation>& gts,
                       int delta_eval, double fs);

}  // namespace bcg::metrics
