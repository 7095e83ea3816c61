#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "bcg/core.hpp"

// Exact bipartite assignment (Hungarian / shortest augmenting path), the
// set-prediction matching cost, and tolerance-gated evaluation matching.

namespace bcg::matching {

struct CostMatrix {
  std::size_t rows = 0;  // predictions
  std::size_t cols = 0;  // ground truth
  std::vector<double> c;  // row-major, rows*cols, finite

  double at(std::size_t r, std::size_t col) const { return c[r * cols + col]; }
  double& at(std::size_t r, std::size_t col) { return c[r * cols + col]; }
};

struct Assignment {
  // (row, col) pairs, injective in both coordinates, sorted by row.
  // Covers the smaller side of the matrix entirely.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  double total_cost = 0.0;
};

// Minimum-cost assignment covering min(rows, cols) pairs. Entries must be
// finite. Ties between equal-cost assignments break deterministically
// (fixed scan order); reruns always produce the identical pair list.
Assignment hungarian(const CostMatrix& costs);

// Eq-style matching cost for one (prediction, ground-truth) pair:
//   lambda_cls * (-p_peak) + lambda_pt * |t_hat - t_j|
// with the class term on probabilities (DETR convention). Switch
// log_class_cost on to use -log(p_peak) instead.
double match_cost(double p_peak, double t_hat, double t_gt, double lambda_cls,
                  double lambda_pt, bool log_class_cost = false);

struct MatchWeights {
  double lambda_cls = 1.0;
  double lambda_pt = 5.0;
  bool log_class_cost = false;
};

// One-to-one matching between query outputs and ground-truth peaks on the
// normalized time axis. peak_probs[k] is the softmax peak-class
// probability of query k, locations[k] its normalized location.
// Requires K >= |gt|.
Assignment match_sets(const std::vector<double>& peak_probs,
                      const std::vector<double>& locations,
                      const core::PeakAnnotation& gt, std::size_t T,
                      const MatchWeights& w);

struct ToleranceMatch {
  // (predicted time, ground-truth time), one entry per true positive,
  // sorted by ground-truth time.
  std::vector<std::pair<int, int>> tp_pairs;
  std::vector<int> fp_times;  // unmatched predictions
  std::vector<int> fn_times;  // unmatched ground truths
};

// Optimal one-to-one matching maximizing the number of pairs within
// delta_eval samples, minimizing total |dt| among those.
ToleranceMatch tolerance_match(const core::DetectionSet& pred,
                               const core::PeakAnnotation& gt, int delta_eval);

}  // namespace bcg::matching
