#pragma once

#include <cstddef>
#include <vector>

#include "bcg/core.hpp"

// Temporal Peak Suppression: threshold a dense probability sequence,
// group candidates into clusters under a minimum separation, keep one
// argmax per cluster.

namespace bcg::tps {

enum class ClusterMode {
  // A new cluster starts when the gap to the previous candidate is
  // >= delta (transitive chaining; the default reading).
  chain,
  // A new cluster starts when the distance to the current cluster's first
  // candidate is >= delta. Kept for sensitivity analysis.
  fixed_start,
};

struct TpsConfig {
  double tau = 0.5;  // confidence threshold, in (0,1)
  int delta = 44;    // minimum inter-peak separation in samples (>= 1)
  ClusterMode mode = ClusterMode::chain;

  void validate() const;
};

// Default delta from the 180 bpm physiological floor: round(0.33 * fs).
int default_delta(double fs);

// Ascending indices with probs[t] >= tau.
std::vector<int> threshold_candidates(const core::ProbabilitySequence& y,
                                      double tau);

// Partition ascending candidates into clusters under `delta`.
std::vector<std::vector<int>> cluster_candidates(const std::vector<int>& cands,
                                                 int delta,
                                                 ClusterMode mode = ClusterMode::chain);

// Full pipeline: one event per cluster at the cluster argmax (ties break
// toward the smallest index), score = probability at that index.
core::DetectionSet suppress(const core::ProbabilitySequence& y,
                            const TpsConfig& cfg);

}  // namespace bcg::tps
