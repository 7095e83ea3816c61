#include "bcg/core.hpp"

#include <algorithm>
#include <cmath>

#include "bcg/kernels.hpp"

namespace bcg::core {

void validate_epoch(const SignalEpoch& epoch) {
  if (epoch.samples.empty()) throw InvalidInput("epoch has no samples");
  if (!(epoch.fs > 0.0)) throw InvalidInput("epoch sampling rate must be > 0");
  if (epoch.epoch_index < 0) throw InvalidInput("epoch_index must be >= 0");
  for (double x : epoch.samples) {
    if (!std::isfinite(x))
      throw InvalidInput("epoch '" + epoch.subject_id +
                         "' contains a non-finite sample");
  }
}

void validate_annotation(const PeakAnnotation& ann, std::size_t T) {
  int prev = -1;
  for (int p : ann.peaks) {
    if (p < 0 || static_cast<std::size_t>(p) >= T)
      throw InvalidInput("peak index " + std::to_string(p) +
                         " outside epoch of length " + std::to_string(T));
    if (p <= prev)
      throw InvalidInput("peak indices must be strictly increasing");
    prev = p;
  }
}

SignalEpoch normalize_epoch(const SignalEpoch& epoch) {
  const std::size_t n = epoch.length();
  if (n < 2) throw InvalidInput("normalize_epoch requires at least 2 samples");
  for (double x : epoch.samples) {
    if (!std::isfinite(x))
      throw InvalidInput("normalize_epoch: non-finite sample");
  }

  const double* x = epoch.samples.data();
  const double mean = kernels::sum(x, n) / static_cast<double>(n);

  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - mean;
    sq += d * d;
  }
  const double sd = std::sqrt(sq / static_cast<double>(n));

  SignalEpoch out = epoch;
  if (sd < 1e-8) {
    // Flat segment: emit zeros and let the metrics stage flag it.
    for (double& v : out.samples) v = 0.0;
    return out;
  }
  const double inv = 1.0 / sd;
  for (std::size_t i = 0; i < n; ++i) out.samples[i] = (x[i] - mean) * inv;
  return out;
}

DenseLabels rasterize_labels(const PeakAnnotation& ann, std::size_t T,
                             int halfwidth) {
  if (halfwidth < 0) throw InvalidInput("halfwidth must be >= 0");
  validate_annotation(ann, T);

  DenseLabels out;
  out.labels.assign(T, 0.0);
  for (int p : ann.peaks) {
    const int lo = std::max(0, p - halfwidth);
    const int hi = std::min(static_cast<int>(T) - 1, p + halfwidth);
    for (int t = lo; t <= hi; ++t) out.labels[static_cast<std::size_t>(t)] = 1.0;
  }
  return out;
}

double to_normalized_time(int t, std::size_t T) {
  if (T < 2) throw InvalidInput("to_normalized_time requires T >= 2");
  if (t < 0 || static_cast<std::size_t>(t) >= T)
    throw InvalidInput("sample index out of range");
  return static_cast<double>(t) / static_cast<double>(T - 1);
}

int from_normalized_time(double u, std::size_t T) {
  if (T < 2) throw InvalidInput("from_normalized_time requires T >= 2");
  if (!(u >= 0.0 && u <= 1.0))
    throw InvalidInput("normalized time must lie in [0,1]");
  return static_cast<int>(std::llround(u * static_cast<double>(T - 1)));
}

}  // namespace bcg::core
