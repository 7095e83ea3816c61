#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "bcg/core.hpp"
#include "bcg/rng.hpp"

// Seeded synthetic BCG epoch generator with exact ground-truth J-peak
// times. The J wave is a Gaussian-windowed cosine riding on a respiratory
// baseline, white noise, and occasional high-amplitude artifact bursts.

namespace bcg::synthgen {

struct SynthConfig {
  double fs = 133.0;           // Hz
  double epoch_seconds = 30.0;
  double mean_rr = 0.9;        // seconds
  double rr_jitter = 0.03;     // std of the RR random-walk step, seconds
  double rr_min = 0.33;        // seconds (180 bpm physiological floor)
  double rr_max = 2.0;         // seconds
  double j_amplitude = 1.0;
  double j_width = 0.04;       // Gaussian envelope std, seconds
  double j_freq = 9.0;         // carrier, Hz
  double resp_amplitude = 0.4;
  double resp_freq = 0.25;     // Hz
  double noise_std = 0.1;
  double artifact_rate = 0.2;  // expected bursts per epoch
  std::uint64_t seed = 0;

  std::size_t epoch_length() const;  // round(epoch_seconds * fs)
  void validate() const;
};

struct BeatTrain {
  std::vector<double> beat_times;  // seconds, strictly increasing
};

// Bounded Gaussian random walk over RR intervals. First beat uniform in
// [0, mean_rr); the walk state starts at mean_rr; each step adds
// N(0, rr_jitter) and clamps to [rr_min, rr_max].
BeatTrain generate_rr_train(const SynthConfig& cfg, rng::Engine& rng);

// Renders one epoch from a beat train. Draw order is fixed: per-sample
// noise first, then artifact bursts. Beats that would round to an
// annotation index >= T are dropped from both signal and annotation.
std::pair<core::SignalEpoch, core::PeakAnnotation> render_epoch(
    const BeatTrain& beats, const SynthConfig& cfg, rng::Engine& rng);

// Epoch i uses seed cfg.seed-independent base_seed + i, so any single
// epoch is reproducible in isolation.
std::vector<std::pair<core::SignalEpoch, core::PeakAnnotation>>
generate_dataset(const SynthConfig& cfg, std::size_t n_epochs,
                 std::uint64_t base_seed);

}  // namespace bcg::synthgen
