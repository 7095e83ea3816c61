#include "bcg/tps.hpp"

#include <cmath>

namespace bcg::tps {

void TpsConfig::validate() const {
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidInput("tps: tau must be in (0,1)");
  if (delta < 1) throw InvalidInput("tps: delta must be >= 1");
}

int default_delta(double fs) {
  if (!(fs > 0.0)) throw InvalidInput("tps: fs must be > 0");
  return static_cast<int>(std::lround(0.33 * fs));
}

std::vector<int> threshold_candidates(const core::ProbabilitySequence& y,
                                      double tau) {
  std::vector<int> out;
  for (std::size_t t = 0; t < y.probs.size(); ++t)
    if (y.probs[t] >= tau) out.push_back(static_cast<int>(t));
  return out;
}

std::vector<std::vector<int>> cluster_candidates(const std::vector<int>& cands,
                                                 int delta, ClusterMode mode) {
  std::vector<std::vector<int>> clusters;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    bool fresh = clusters.empty();
    if (!fresh) {
      if (mode == ClusterMode::chain) {
        fresh = cands[i] - clusters.back().back() >= delta;
      } else {
        fresh = cands[i] - clusters.back().front() >= delta;
      }
    }
    if (fresh) clusters.emplace_back();
    clusters.back().push_back(cands[i]);
  }
  return clusters;
}

core::DetectionSet suppress(const core::ProbabilitySequence& y,
                            const TpsConfig& cfg) {
  cfg.validate();
  const auto cands = threshold_candidates(y, cfg.tau);
  const auto clusters = cluster_candidates(cands, cfg.delta, cfg.mode);

  core::DetectionSet out;
  out.events.reserve(clusters.size());
  for (const auto& cluster : clusters) {
    int best = cluster.front();
    for (int t : cluster) {
      if (y.probs[static_cast<std::size_t>(t)] >
          y.probs[static_cast<std::size_t>(best)])
        best = t;  // strict > keeps the smallest index on ties
    }
    out.events.push_back({best, y.probs[static_cast<std::size_t>(best)]});
  }
  return out;
}

}  // namespace bcg::tps
