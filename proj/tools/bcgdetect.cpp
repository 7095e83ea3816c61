// bcgdetect: synthesize BCG datasets, train and evaluate the two J-peak
// detectors, audit model complexity, and build comparison reports.
//
// Exit codes: 0 success, 2 usage/input error, 3 runtime failure.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "bcg/pipeline.hpp"

namespace {

std::string env_data_root() {
  const char* v = std::getenv("BCG_DATA_ROOT");
  return v != nullptr ? std::string(v) : std::string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BCG J-peak detection: synthetic data, training, evaluation"};
  app.require_subcommand(1);

  // ---- synth ----
  bcg::pipeline::SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  synth_cmd->add_option("--out", synth.out_dir, "output dataset directory")
      ->required();
  synth_cmd->add_option("--n", synth.n, "number of epochs")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--subjects", synth.subjects, "number of subjects");
  synth_cmd->add_option("--seconds", synth.synth.epoch_seconds, "epoch length in seconds");
  synth_cmd->add_option("--fs", synth.synth.fs, "sampling rate in Hz");
  synth_cmd->add_option("--seed", synth.synth.seed, "base seed");
  synth_cmd->add_option("--mean-rr", synth.synth.mean_rr, "mean RR interval (s)");
  synth_cmd->add_option("--rr-jitter", synth.synth.rr_jitter, "RR random-walk step std (s)");
  synth_cmd->add_option("--rr-min", synth.synth.rr_min, "minimum RR interval (s)");
  synth_cmd->add_option("--rr-max", synth.synth.rr_max, "maximum RR interval (s)");
  synth_cmd->add_option("--j-amplitude", synth.synth.j_amplitude, "J-wave amplitude");
  synth_cmd->add_option("--j-width", synth.synth.j_width, "J-wave envelope std (s)");
  synth_cmd->add_option("--j-freq", synth.synth.j_freq, "J-wave carrier (Hz)");
  synth_cmd->add_option("--resp-amplitude", synth.synth.resp_amplitude, "respiration amplitude");
  synth_cmd->add_option("--resp-freq", synth.synth.resp_freq, "respiration frequency (Hz)");
  synth_cmd->add_option("--noise-std", synth.synth.noise_std, "white noise std");
  synth_cmd->add_option("--artifact-rate", synth.synth.artifact_rate, "expected bursts per epoch");

  // ---- train ----
  bcg::pipeline::TrainArgs train;
  std::string train_model = "detr";
  train.data_dir = env_data_root();
  auto* train_cmd = app.add_subcommand("train", "train a detector");
  train_cmd->add_option("--model", train_model, "unet|detr")
      ->check(CLI::IsMember({"unet", "detr"}));
  auto* train_data = train_cmd->add_option("--data", train.data_dir,
                                           "dataset directory (default: $BCG_DATA_ROOT)");
  train_cmd->add_option("--out", train.out, "output checkpoint path")->required();
  train_cmd->add_option("--train-fraction", train.train_fraction,
                        "chronological train fraction");
  train_cmd->add_flag("--per-subject", train.per_subject,
                      "train one model per subject (out becomes a directory)");
  train_cmd->add_option("--lr", train.cfg.lr, "Adam learning rate");
  train_cmd->add_option("--batch-size", train.cfg.batch_size, "batch size");
  train_cmd->add_option("--epochs", train.cfg.epochs, "training epochs");
  train_cmd->add_option("--lambda-cls", train.cfg.lambda_cls, "matching class weight");
  train_cmd->add_option("--lambda-pt", train.cfg.lambda_pt, "location L1 weight");
  train_cmd->add_option("--lambda-aux", train.cfg.lambda_aux, "auxiliary loss weight");
  train_cmd->add_option("--noobj-weight", train.cfg.noobj_weight,
                        "non-peak class down-weighting");
  train_cmd->add_option("--seed", train.cfg.seed, "init/shuffle seed");
  train_cmd->add_option("--halfwidth", train.cfg.label_halfwidth,
                        "dense label halfwidth (samples)");
  train_cmd->add_flag("--grad-clip", train.cfg.grad_clip,
                      "clip gradients at norm 10 (divergence rescue)");
  train_cmd->add_option("--threads", train.cfg.threads,
                        "worker threads (0 = logical cores)");
  train_cmd->add_option("--val-every", train.cfg.val_every,
                        "validation cadence in epochs");
  train_cmd->add_option("--score-threshold", train.cfg.score_threshold,
                        "decode threshold used for validation");
  train_cmd->add_option("--tau", train.cfg.tps_tau, "TPS threshold for validation");
  train_cmd->add_option("--delta", train.cfg.tps_delta,
                        "TPS separation in samples (0 = round(0.33*fs))");
  train_cmd->add_option("--delta-eval", train.cfg.delta_eval,
                        "evaluation tolerance in samples");

  // ---- eval ----
  bcg::pipeline::EvalArgs eval;
  eval.data_dir = env_data_root();
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  eval_cmd->add_option("--checkpoint", eval.checkpoint,
                       "checkpoint file (or per-subject directory)")
      ->required();
  auto* eval_data = eval_cmd->add_option("--data", eval.data_dir,
                                         "dataset directory (default: $BCG_DATA_ROOT)");
  eval_cmd->add_option("--out", eval.out_dir, "output report directory")->required();
  eval_cmd->add_option("--train-fraction", eval.train_fraction,
                       "chronological train fraction (defines the test split)");
  eval_cmd->add_option("--tau", eval.tps_tau, "TPS threshold");
  eval_cmd->add_option("--delta", eval.tps_delta,
                       "TPS separation in samples (0 = round(0.33*fs))");
  eval_cmd->add_option("--score-threshold", eval.score_threshold,
                       "set-prediction decode threshold");
  eval_cmd->add_option("--delta-eval", eval.delta_eval,
                       "evaluation tolerance in samples");
  eval_cmd->add_option("--threads", eval.threads,
                       "worker threads (0 = logical cores)");

  // ---- budget ----
  bcg::pipeline::BudgetArgs budget;
  auto* budget_cmd =
      app.add_subcommand("budget", "parameter/FLOP audit of both models");
  budget_cmd->add_option("--seconds", budget.epoch_seconds, "epoch length (s)");
  budget_cmd->add_option("--fs", budget.fs, "sampling rate (Hz)");
  budget_cmd->add_option("--widths", budget.unet.backbone.widths,
                         "backbone stage widths");
  budget_cmd->add_option("--kernels", budget.unet.backbone.kernels,
                         "backbone kernel sizes");
  budget_cmd->add_option("--strides", budget.unet.backbone.strides,
                         "backbone strides");
  budget_cmd->add_option("--decoder-widths", budget.unet.decoder_widths,
                         "unet decoder stage widths (deepest first)");
  budget_cmd->add_option("--d-model", budget.detr.d_model, "transformer width");
  budget_cmd->add_option("--enc-layers", budget.detr.enc_layers, "encoder layers");
  budget_cmd->add_option("--dec-layers", budget.detr.dec_layers, "decoder layers");
  budget_cmd->add_option("--heads", budget.detr.heads, "attention heads");
  budget_cmd->add_option("--ffn", budget.detr.ffn_dim, "feedforward width");
  budget_cmd->add_option("--queries", budget.detr.num_queries, "query count");

  // ---- report ----
  bcg::pipeline::ReportArgs report;
  auto* report_cmd =
      app.add_subcommand("report", "compare two eval outputs side by side");
  report_cmd->add_option("--a", report.eval_a, "first eval directory")->required();
  report_cmd->add_option("--b", report.eval_b, "second eval directory")->required();
  report_cmd->add_option("--out", report.out_dir, "output directory")->required();
  report_cmd->add_option("--label-a", report.label_a, "label for the first run");
  report_cmd->add_option("--label-b", report.label_b, "label for the second run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth_cmd->parsed()) {
      bcg::pipeline::cmd_synth(synth, std::cout);
    } else if (train_cmd->parsed()) {
      train.cfg.kind = bcg::trainer::model_kind_from_string(train_model);
      if (train.data_dir.empty() && train_data->count() == 0)
        throw bcg::InvalidInput("train: --data not given and BCG_DATA_ROOT unset");
      bcg::pipeline::cmd_train(train, std::cout);
    } else if (eval_cmd->parsed()) {
      if (eval.data_dir.empty() && eval_data->count() == 0)
        throw bcg::InvalidInput("eval: --data not given and BCG_DATA_ROOT unset");
      bcg::pipeline::cmd_eval(eval, std::cout);
    } else if (budget_cmd->parsed()) {
      budget.detr.backbone = budget.unet.backbone;  // shared by construction
      bcg::pipeline::cmd_budget(budget, std::cout);
    } else if (report_cmd->parsed()) {
      bcg::pipeline::cmd_report(report, std::cout);
    }
  } catch (const bcg::InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const bcg::RuntimeFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
