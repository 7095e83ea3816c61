#include "bcg/synthgen.hpp"

#include <cmath>

namespace bcg::synthgen {

std::size_t SynthConfig::epoch_length() const {
  return static_cast<std::size_t>(std::lround(epoch_seconds * fs));
}

void SynthConfig::validate() const {
  if (!(fs > 0.0)) throw InvalidInput("synth: fs must be > 0");
  if (!(epoch_seconds > 0.0)) throw InvalidInput("synth: epoch_seconds must be > 0");
  if (!(rr_min > 0.0)) throw InvalidInput("synth: rr_min must be > 0");
  if (!(rr_min <= mean_rr && mean_rr <= rr_max))
    throw InvalidInput("synth: need rr_min <= mean_rr <= rr_max");
  if (rr_jitter < 0.0 || j_amplitude < 0.0 || j_width <= 0.0 || j_freq < 0.0 ||
      resp_amplitude < 0.0 || resp_freq < 0.0 || noise_std < 0.0 ||
      artifact_rate < 0.0)
    throw InvalidInput("synth: rates and amplitudes must be >= 0");
  if (epoch_length() < 2) throw InvalidInput("synth: epoch too short");
}

BeatTrain generate_rr_train(const SynthConfig& cfg, rng::Engine& rng) {
  cfg.validate();
  BeatTrain train;
  double t = rng::uniform01(rng) * cfg.mean_rr;
  double interval = cfg.mean_rr;
  while (t < cfg.epoch_seconds) {
    train.beat_times.push_back(t);
    interval += rng::gaussian(rng) * cfg.rr_jitter;
    interval = std::min(std::max(interval, cfg.rr_min), cfg.rr_max);
    t += interval;
  }
  return train;
}

std::pair<core::SignalEpoch, core::PeakAnnotation> render_epoch(
    const BeatTrain& beats, const SynthConfig& cfg, rng::Engine& rng) {
  cfg.validate();
  const std::size_t T = cfg.epoch_length();

  core::SignalEpoch epoch;
  epoch.fs = cfg.fs;
  epoch.samples.assign(T, 0.0);
  core::PeakAnnotation ann;

  const double two_sigma_sq = 2.0 * cfg.j_width * cfg.j_width;
  for (double tb : beats.beat_times) {
    const long idx = std::lround(tb * cfg.fs);
    if (idx < 0 || idx >= static_cast<long>(T)) continue;
    ann.peaks.push_back(static_cast<int>(idx));
    for (std::size_t t = 0; t < T; ++t) {
      const double dt = static_cast<double>(t) / cfg.fs - tb;
      epoch.samples[t] += cfg.j_amplitude * std::exp(-dt * dt / two_sigma_sq) *
                          std::cos(rng::kTwoPi * cfg.j_freq * dt);
    }
  }

  if (cfg.resp_amplitude > 0.0) {
    for (std::size_t t = 0; t < T; ++t)
      epoch.samples[t] += cfg.resp_amplitude *
                          std::sin(rng::kTwoPi * cfg.resp_freq *
                                   static_cast<double>(t) / cfg.fs);
  }

  if (cfg.noise_std > 0.0) {
    for (std::size_t t = 0; t < T; ++t)
      epoch.samples[t] += rng::gaussian(rng) * cfg.noise_std;
  }

  if (cfg.artifact_rate > 0.0) {
    const int n_bursts = rng::poisson(rng, cfg.artifact_rate);
    const double burst_seconds = 0.5;
    const std::size_t burst_len =
        static_cast<std::size_t>(std::lround(burst_seconds * cfg.fs));
    // AR(1) colored noise, unit stationary variance, Hann-windowed,
    // 3x the J amplitude so bursts genuinely dominate the waveform.
    const double phi = 0.9;
    const double drive = std::sqrt(1.0 - phi * phi);
    for (int b = 0; b < n_bursts; ++b) {
      const double start_s =
          rng::uniform01(rng) *
          std::max(0.0, cfg.epoch_seconds - burst_seconds);
      const std::size_t start =
          static_cast<std::size_t>(std::lround(start_s * cfg.fs));
      double state = 0.0;
      for (std::size_t i = 0; i < burst_len && start + i < T; ++i) {
        state = phi * state + drive * rng::gaussian(rng);
        const double window =
            0.5 * (1.0 - std::cos(rng::kTwoPi * static_cast<double>(i) /
                                  static_cast<double>(burst_len)));
        epoch.samples[start + i] += 3.0 * cfg.j_amplitude * window * state;
      }
    }
  }

  return {std::move(epoch), std::move(ann)};
}

std::vector<std::pair<core::SignalEpoch, core::PeakAnnotation>>
generate_dataset(const SynthConfig& cfg, std::size_t n_epochs,
                 std::uint64_t base_seed) {
  cfg.validate();
  if (n_epochs < 1) throw InvalidInput("generate_dataset: n_epochs must be >= 1");
  std::vector<std::pair<core::SignalEpoch, core::PeakAnnotation>> out;
  out.reserve(n_epochs);
  for (std::size_t i = 0; i < n_epochs; ++i) {
    rng::Engine rng(base_seed + i);
    const BeatTrain beats = generate_rr_train(cfg, rng);
    auto pair = render_epoch(beats, cfg, rng);
    pair.first.epoch_index = static_cast<int>(i);
    out.push_back(std::move(pair));
  }
  return out;
}

}  // namespace bcg::synthgen
