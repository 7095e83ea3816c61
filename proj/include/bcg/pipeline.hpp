#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "bcg/dataio.hpp"
#include "bcg/models.hpp"
#include "bcg/synthgen.hpp"
#include "bcg/trainer.hpp"

// Command implementations shared by the CLI binary and the acceptance
// suite. Every command writes a run manifest (full resolved config, seed,
// tool version, paths, wall-clock duration) next to its outputs.

namespace bcg::pipeline {

inline constexpr const char* kToolVersion = "bcgdetect 1.0.0";

struct SynthArgs {
  std::filesystem::path out_dir;
  std::size_t n = 600;
  int subjects = 5;
  synthgen::SynthConfig synth;  // fs, epoch_seconds, seed, waveform knobs
};

void cmd_synth(const SynthArgs& args, std::ostream& log);

struct TrainArgs {
  std::filesystem::path data_dir;
  std::filesystem::path out;  // checkpoint file; directory when per_subject
  double train_fraction = 0.8;
  bool per_subject = false;
  trainer::TrainConfig cfg;
};

void cmd_train(const TrainArgs& args, std::ostream& log);

struct EvalArgs {
  std::filesystem::path checkpoint;  // file, or directory when per-subject
  std::filesystem::path data_dir;
  std::filesystem::path out_dir;
  double train_fraction = 0.8;
  double tps_tau = 0.5;
  int tps_delta = 0;  // 0 = round(0.33*fs)
  double score_threshold = 0.5;
  int delta_eval = 10;
  int threads = 0;  // 0 = logical cores
};

void cmd_eval(const EvalArgs& args, std::ostream& log);

struct BudgetArgs {
  models::UNetConfig unet;
  models::DetrConfig detr;
  double epoch_seconds = 30.0;
  double fs = 133.0;
};

void cmd_budget(const BudgetArgs& args, std::ostream& out);

struct ReportArgs {
  std::filesystem::path eval_a;
  std::filesystem::path eval_b;
  std::filesystem::path out_dir;
  std::string label_a = "a";
  std::string label_b = "b";
};

void cmd_report(const ReportArgs& args, std::ostream& log);

// Shortest round-trip decimal form of a double (CSV/manifest formatting).
std::string fmt_double(double x);

}  // namespace bcg::pipeline
