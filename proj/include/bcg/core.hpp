#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace bcg {

// Bad arguments or malformed input data; the CLI maps this to exit code 2.
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Failures of a running computation (e.g. diverged training); exit code 3.
struct RuntimeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace bcg

namespace bcg::core {

// One fixed-rate 1-D signal window.
struct SignalEpoch {
  std::vector<double> samples;
  double fs = 0.0;              // Hz
  std::string subject_id;
  int epoch_index = 0;          // chronological within subject

  std::size_t length() const { return samples.size(); }
};

// Ground-truth peak sample indices, strictly increasing, within [0, T).
struct PeakAnnotation {
  std::vector<int> peaks;
};

// Dense per-sample peak probability, same length as the owning epoch.
struct ProbabilitySequence {
  std::vector<double> probs;
};

// Binary per-sample labels (stored as 0.0/1.0 for direct use in losses).
struct DenseLabels {
  std::vector<double> labels;
};

struct DetectionEvent {
  int time = 0;        // sample index
  double score = 0.0;  // confidence in [0,1]
};

// Unordered set of predicted peak events.
struct DetectionSet {
  std::vector<DetectionEvent> events;
};

// Throws InvalidInput when basic shape/value invariants are violated.
void validate_epoch(const SignalEpoch& epoch);
void validate_annotation(const PeakAnnotation& ann, std::size_t T);

// Zero-mean / unit-std (population convention) copy of the epoch.
// Inputs with std below 1e-8 come back all-zero instead of exploding.
SignalEpoch normalize_epoch(const SignalEpoch& epoch);

// labels[t] = 1 iff some annotated peak lies within `halfwidth` samples.
DenseLabels rasterize_labels(const PeakAnnotation& ann, std::size_t T,
                             int halfwidth);

// u = t/(T-1) and its rounding inverse; exact round trip on integers.
double to_normalized_time(int t, std::size_t T);
int from_normalized_time(double u, std::size_t T);

}  // namespace bcg::core
