#include "bcg/pipeline.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>
#include <thread>

#include "bcg/metrics.hpp"
#include "bcg/svgplot.hpp"
#include "bcg/tps.hpp"

namespace bcg::pipeline {

namespace fs = std::filesystem;
using dataio::json;

std::string fmt_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void write_run_manifest(const fs::path& path, const std::string& command,
                        const json& config, const json& inputs,
                        const json& outputs, double duration_seconds) {
  json m;
  m["tool"] = kToolVersion;
  m["command"] = command;
  m["config"] = config;
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  m["duration_seconds"] = duration_seconds;
  dataio::atomic_write(path, m.dump(2) + "\n");
}

json synth_config_json(const SynthArgs& args) {
  const auto& c = args.synth;
  json j;
  j["n"] = args.n;
  j["subjects"] = args.subjects;
  j["fs"] = c.fs;
  j["epoch_seconds"] = c.epoch_seconds;
  j["mean_rr"] = c.mean_rr;
  j["rr_jitter"] = c.rr_jitter;
  j["rr_min"] = c.rr_min;
  j["rr_max"] = c.rr_max;
  j["j_amplitude"] = c.j_amplitude;
  j["j_width"] = c.j_width;
  j["j_freq"] = c.j_freq;
  j["resp_amplitude"] = c.resp_amplitude;
  j["resp_freq"] = c.resp_freq;
  j["noise_std"] = c.noise_std;
  j["artifact_rate"] = c.artifact_rate;
  j["seed"] = c.seed;
  return j;
}

json train_config_json(const trainer::TrainConfig& c) {
  json j;
  j["model"] = trainer::to_string(c.kind);
  j["lr"] = c.lr;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["lambda_cls"] = c.lambda_cls;
  j["lambda_pt"] = c.lambda_pt;
  j["lambda_aux"] = c.lambda_aux;
  j["noobj_weight"] = c.noobj_weight;
  j["seed"] = c.seed;
  j["label_halfwidth"] = c.label_halfwidth;
  j["grad_clip"] = c.grad_clip;
  j["grad_clip_norm"] = c.grad_clip_norm;
  j["val_every"] = c.val_every;
  j["score_threshold"] = c.score_threshold;
  j["tps_tau"] = c.tps_tau;
  j["tps_delta"] = c.tps_delta;
  j["delta_eval"] = c.delta_eval;
  return j;
}

json history_json(const trainer::TrainHistory& history) {
  json rows = json::array();
  for (const auto& r : history) {
    json jr;
    jr["epoch"] = r.epoch;
    jr["train_loss"] = r.train_loss;
    jr["det_loss"] = r.det_loss;
    jr["aux_loss"] = r.aux_loss;
    jr["has_val"] = r.has_val;
    jr["val_f1"] = r.val_f1;
    jr["val_mae_ms"] = r.val_mae_ms;
    rows.push_back(jr);
  }
  return rows;
}

std::string history_csv(const trainer::TrainHistory& history) {
  std::string out =
      "epoch,train_loss,det_loss,aux_loss,val_f1,val_mae_ms\n";
  for (const auto& r : history) {
    out += std::to_string(r.epoch) + "," + fmt_double(r.train_loss) + "," +
           fmt_double(r.det_loss) + "," + fmt_double(r.aux_loss) + ",";
    if (r.has_val)
      out += fmt_double(r.val_f1) + "," + fmt_double(r.val_mae_ms);
    else
      out += ",";
    out += "\n";
  }
  return out;
}

std::string subject_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "s%02d", index + 1);
  return buf;
}

std::string epoch_file_stem(int local_index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "e%05d", local_index);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

void cmd_synth(const SynthArgs& args, std::ostream& log) {
  const auto start = Clock::now();
  if (args.n < 1) throw InvalidInput("synth: --n must be >= 1");
  if (args.subjects < 1) throw InvalidInput("synth: --subjects must be >= 1");
  if (static_cast<std::size_t>(args.subjects) > args.n)
    throw InvalidInput("synth: more subjects than epochs");
  args.synth.validate();

  auto generated = synthgen::generate_dataset(args.synth, args.n, args.synth.seed);

  dataio::Dataset data;
  data.manifest.fs = args.synth.fs;
  data.manifest.epoch_seconds = args.synth.epoch_seconds;

  const std::size_t base = args.n / static_cast<std::size_t>(args.subjects);
  const std::size_t rem = args.n % static_cast<std::size_t>(args.subjects);
  std::size_t flat = 0;
  for (int s = 0; s < args.subjects; ++s) {
    dataio::SubjectEntry subject;
    subject.subject_id = subject_name(s);
    const std::size_t count = base + (static_cast<std::size_t>(s) < rem ? 1 : 0);
    for (std::size_t i = 0; i < count; ++i, ++flat) {
      auto& [epoch, ann] = generated[flat];
      epoch.subject_id = subject.subject_id;
      epoch.epoch_index = static_cast<int>(i);
      dataio::EpochFileRef ref;
      ref.epoch_index = static_cast<int>(i);
      ref.signal_path = subject.subject_id + "/" +
                        epoch_file_stem(static_cast<int>(i)) + ".sig";
      ref.ann_path = subject.subject_id + "/" +
                     epoch_file_stem(static_cast<int>(i)) + ".ann";
      subject.epochs.push_back(ref);
      data.epochs.push_back({std::move(epoch), std::move(ann)});
    }
    data.manifest.subjects.push_back(std::move(subject));
  }

  dataio::save_dataset(data, args.out_dir);

  json outputs;
  outputs["dataset_dir"] = args.out_dir.string();
  outputs["epochs"] = args.n;
  write_run_manifest(args.out_dir / "run_manifest.json", "synth",
                     synth_config_json(args), json::object(), outputs,
                     seconds_since(start));
  log << "wrote " << args.n << " epochs (" << args.subjects << " subjects) to "
      << args.out_dir.string() << "\n";
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

namespace {

constexpr double kMinRrSeconds = 0.33;  // 180 bpm floor, shared with synth

struct PreparedData {
  std::vector<trainer::TrainSample> train;
  std::vector<trainer::TrainSample> test;
};

PreparedData prepare(const dataio::Dataset& data, const dataio::Split& split,
                     int halfwidth, const std::string& subject_filter) {
  PreparedData out;
  for (const auto& ref : split.train) {
    if (!subject_filter.empty() && ref.subject_id != subject_filter) continue;
    const auto& rec = data.epochs[ref.flat_index];
    out.train.push_back(trainer::make_sample(rec.epoch, rec.ann, halfwidth));
  }
  for (const auto& ref : split.test) {
    if (!subject_filter.empty() && ref.subject_id != subject_filter) continue;
    const auto& rec = data.epochs[ref.flat_index];
    out.test.push_back(trainer::make_sample(rec.epoch, rec.ann, halfwidth));
  }
  return out;
}

void train_one(const TrainArgs& args, const dataio::Dataset& data,
               const dataio::Split& split, const std::string& subject_filter,
               const fs::path& out_path, std::ostream& log) {
  const double fs_hz = data.manifest.fs;
  const PreparedData prep =
      prepare(data, split, args.cfg.label_halfwidth, subject_filter);
  if (prep.train.empty())
    throw InvalidInput("train: no training epochs" +
                       (subject_filter.empty() ? std::string()
                                               : " for subject " + subject_filter));

  trainer::TrainConfig cfg = args.cfg;
  if (cfg.tps_delta == 0) cfg.tps_delta = tps::default_delta(fs_hz);

  json config;
  config["fs"] = fs_hz;
  config["epoch_seconds"] = data.manifest.epoch_seconds;
  config["train"] = train_config_json(cfg);
  config["train_fraction"] = args.train_fraction;
  config["subject"] = subject_filter.empty() ? "pooled" : subject_filter;

  trainer::TrainResult result;
  if (cfg.kind == trainer::ModelKind::unet) {
    models::UNetConfig mcfg;
    models::UNetModel model(mcfg, cfg.seed);
    result = trainer::train_unet(model, prep.train, prep.test, fs_hz, cfg);
    config["model"] = dataio::unet_to_json(mcfg);
    dataio::save_checkpoint(out_path, "unet", config,
                            history_json(result.history), model.params());
  } else {
    models::DetrConfig mcfg;
    mcfg.validate_capacity(data.manifest.epoch_seconds, kMinRrSeconds);
    models::DetrModel model(mcfg, cfg.seed);
    result = trainer::train_detr(model, prep.train, prep.test, fs_hz, cfg);
    config["model"] = dataio::detr_to_json(mcfg);
    dataio::save_checkpoint(out_path, "detr", config,
                            history_json(result.history), model.params());
  }

  dataio::atomic_write(fs::path(out_path.string() + ".history.csv"),
                       history_csv(result.history));

  const auto& last = result.history.back();
  log << "trained " << trainer::to_string(cfg.kind) << " ("
      << (subject_filter.empty() ? "pooled" : subject_filter) << "): "
      << prep.train.size() << " train epochs, final loss "
      << fmt_double(last.train_loss) << ", val F1 " << fmt_double(last.val_f1)
      << " -> " << out_path.string() << "\n";
}

}  // namespace

void cmd_train(const TrainArgs& args, std::ostream& log) {
  const auto start = Clock::now();
  args.cfg.validate();
  if (!fs::exists(args.data_dir / "manifest.json"))
    throw InvalidInput("train: no dataset at " + args.data_dir.string());
  const dataio::Dataset data = dataio::load_dataset(args.data_dir);
  const dataio::Split split =
      dataio::chronological_split(data, args.train_fraction);

  json outputs;
  if (!args.per_subject) {
    if (args.out.has_parent_path()) fs::create_directories(args.out.parent_path());
    train_one(args, data, split, "", args.out, log);
    outputs["checkpoint"] = args.out.string();
  } else {
    fs::create_directories(args.out);
    json list = json::array();
    for (const auto& subject : data.manifest.subjects) {
      const fs::path path =
          args.out / ("model_" + subject.subject_id + ".ckpt");
      train_one(args, data, split, subject.subject_id, path, log);
      list.push_back(path.string());
    }
    outputs["checkpoints"] = list;
  }

  json config;
  config["train"] = train_config_json(args.cfg);
  config["train_fraction"] = args.train_fraction;
  config["per_subject"] = args.per_subject;
  json inputs;
  inputs["dataset_dir"] = args.data_dir.string();
  const fs::path manifest_path =
      args.per_subject ? args.out / "run_manifest.json"
                       : fs::path(args.out.string() + ".run_manifest.json");
  write_run_manifest(manifest_path, "train", config, inputs, outputs,
                     seconds_since(start));
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

namespace {

struct LoadedModel {
  std::string kind;
  std::unique_ptr<models::UNetModel> unet;
  std::unique_ptr<models::DetrModel> detr;
  double fs = 0.0;
};

LoadedModel load_model(const fs::path& path) {
  const dataio::LoadedCheckpoint ckpt = dataio::load_checkpoint(path);
  LoadedModel m;
  m.kind = ckpt.model_kind;
  m.fs = ckpt.config.at("fs").get<double>();
  if (ckpt.model_kind == "unet") {
    m.unet = std::make_unique<models::UNetModel>(
        dataio::unet_from_json(ckpt.config.at("model")), 0);
    dataio::fill_params(m.unet->params(), ckpt);
  } else if (ckpt.model_kind == "detr") {
    m.detr = std::make_unique<models::DetrModel>(
        dataio::detr_from_json(ckpt.config.at("model")), 0);
    dataio::fill_params(m.detr->params(), ckpt);
  } else {
    throw InvalidInput(path.string() + ": unknown model kind '" +
                       ckpt.model_kind + "'");
  }
  return m;
}

std::string report_csv(const metrics::DatasetReport& report) {
  std::string out =
      "scope,epochs,tp,fp,fn,precision,recall,f1,mae_samples,mae_ms,"
      "rr_err_samples,rr_err_ms,card_err_mean\n";
  const auto row = [&](const metrics::ScopeReport& r) {
    out += r.scope + "," + std::to_string(r.epochs) + "," +
           std::to_string(r.tp) + "," + std::to_string(r.fp) + "," +
           std::to_string(r.fn) + "," + fmt_double(r.prf.precision) + "," +
           fmt_double(r.prf.recall) + "," + fmt_double(r.prf.f1) + ",";
    out += r.mae.has ? fmt_double(r.mae.samples) : std::string();
    out += ",";
    out += r.mae.has ? fmt_double(r.mae.ms) : std::string();
    out += ",";
    out += r.rr.has ? fmt_double(r.rr.samples) : std::string();
    out += ",";
    out += r.rr.has ? fmt_double(r.rr.ms) : std::string();
    out += "," + fmt_double(r.card_err_mean) + "\n";
  };
  row(report.pooled);
  for (const auto& r : report.per_subject) row(r);
  return out;
}

std::string per_epoch_csv(const metrics::DatasetReport& report) {
  std::string out =
      "subject,epoch_index,tp,fp,fn,f1,mae_samples,mae_ms,rr_err_samples,"
      "rr_err_ms,card_err\n";
  for (const auto& [ref, m] : report.per_epoch) {
    const metrics::Prf prf = metrics::prf1(m.tp, m.fp, m.fn);
    out += ref.subject + "," + std::to_string(ref.epoch_index) + "," +
           std::to_string(m.tp) + "," + std::to_string(m.fp) + "," +
           std::to_string(m.fn) + "," + fmt_double(prf.f1) + ",";
    out += m.mae.has ? fmt_double(m.mae.samples) : std::string();
    out += ",";
    out += m.mae.has ? fmt_double(m.mae.ms) : std::string();
    out += ",";
    out += m.rr.has ? fmt_double(m.rr.samples) : std::string();
    out += ",";
    out += m.rr.has ? fmt_double(m.rr.ms) : std::string();
    out += "," + std::to_string(m.card_err) + "\n";
  }
  return out;
}

void write_distribution_svgs(const fs::path& dir, const std::string& label,
                             const metrics::DatasetReport& report) {
  std::vector<double> f1, rr, card;
  for (const auto& [ref, m] : report.per_epoch) {
    f1.push_back(metrics::prf1(m.tp, m.fp, m.fn).f1);
    if (m.rr.has) rr.push_back(m.rr.ms);
    card.push_back(static_cast<double>(m.card_err));
  }
  dataio::atomic_write(dir / "distribution_f1.svg",
                       svgplot::violin_svg("F1-score", {{label, f1}}));
  dataio::atomic_write(dir / "distribution_rrerr.svg",
                       svgplot::violin_svg("RR interval error (ms)", {{label, rr}}));
  dataio::atomic_write(
      dir / "distribution_carderr.svg",
      svgplot::violin_svg("Cardinality error", {{label, card}}));
}

}  // namespace

void cmd_eval(const EvalArgs& args, std::ostream& log) {
  const auto start = Clock::now();
  if (!fs::exists(args.data_dir / "manifest.json"))
    throw InvalidInput("eval: no dataset at " + args.data_dir.string());
  if (!fs::exists(args.checkpoint))
    throw InvalidInput("eval: no checkpoint at " + args.checkpoint.string());

  const dataio::Dataset data = dataio::load_dataset(args.data_dir);
  const dataio::Split split =
      dataio::chronological_split(data, args.train_fraction);
  const double fs_hz = data.manifest.fs;

  // One model per subject (directory checkpoint) or one pooled model.
  std::vector<LoadedModel> model_store;
  std::vector<const LoadedModel*> model_of_subject;
  const bool per_subject = fs::is_directory(args.checkpoint);
  if (per_subject) {
    for (const auto& subject : data.manifest.subjects) {
      const fs::path p =
          args.checkpoint / ("model_" + subject.subject_id + ".ckpt");
      if (!fs::exists(p))
        throw InvalidInput("eval: missing per-subject checkpoint " +
                           p.string());
      model_store.push_back(load_model(p));
    }
    for (std::size_t i = 0; i < model_store.size(); ++i)
      model_of_subject.push_back(&model_store[i]);
  } else {
    model_store.push_back(load_model(args.checkpoint));
    for (std::size_t i = 0; i < data.manifest.subjects.size(); ++i)
      model_of_subject.push_back(&model_store[0]);
  }
  for (const auto& m : model_store) {
    if (m.fs != fs_hz)
      throw InvalidInput(
          "eval: checkpoint sampling rate (" + fmt_double(m.fs) +
          " Hz) does not match dataset (" + fmt_double(fs_hz) + " Hz)");
  }

  tps::TpsConfig tcfg;
  tcfg.tau = args.tps_tau;
  tcfg.delta = args.tps_delta > 0 ? args.tps_delta : tps::default_delta(fs_hz);

  // Subject index lookup for per-subject models.
  std::vector<std::string> subject_order;
  for (const auto& s : data.manifest.subjects)
    subject_order.push_back(s.subject_id);
  const auto subject_pos = [&](const std::string& sid) {
    for (std::size_t i = 0; i < subject_order.size(); ++i)
      if (subject_order[i] == sid) return i;
    throw InvalidInput("eval: unknown subject " + sid);
  };

  const std::size_t n_test = split.test.size();
  std::vector<metrics::EpochRef> refs(n_test);
  std::vector<core::DetectionSet> preds(n_test);
  std::vector<core::PeakAnnotation> gts(n_test);

  const unsigned hw = std::thread::hardware_concurrency();
  std::size_t n_workers = args.threads > 0
                              ? static_cast<std::size_t>(args.threads)
                              : static_cast<std::size_t>(hw > 0 ? hw : 1);
  n_workers = std::min<std::size_t>(std::max<std::size_t>(1, n_workers), n_test ? n_test : 1);

  std::atomic<std::size_t> next{0};
  const auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n_test) return;
      const dataio::SplitRef& ref = split.test[i];
      const dataio::EpochRecord& rec = data.epochs[ref.flat_index];
      const std::vector<double> x = core::normalize_epoch(rec.epoch).samples;
      const LoadedModel& m = *model_of_subject[subject_pos(ref.subject_id)];
      core::DetectionSet det;
      if (m.unet) {
        det = tps::suppress(m.unet->infer(x), tcfg);
      } else {
        det = models::detr_decode(m.detr->infer(x), args.score_threshold,
                                  x.size());
      }
      refs[i] = {ref.subject_id, ref.epoch_index};
      preds[i] = std::move(det);
      gts[i] = rec.ann;
    }
  };
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  const metrics::DatasetReport report =
      metrics::evaluate(refs, preds, gts, args.delta_eval, fs_hz);

  fs::create_directories(args.out_dir);
  dataio::atomic_write(args.out_dir / "report.csv", report_csv(report));
  dataio::atomic_write(args.out_dir / "per_epoch.csv", per_epoch_csv(report));
  write_distribution_svgs(args.out_dir, model_store[0].kind, report);

  json config;
  config["checkpoint"] = args.checkpoint.string();
  config["train_fraction"] = args.train_fraction;
  config["tps_tau"] = args.tps_tau;
  config["tps_delta"] = tcfg.delta;
  config["score_threshold"] = args.score_threshold;
  config["delta_eval"] = args.delta_eval;
  json inputs;
  inputs["dataset_dir"] = args.data_dir.string();
  json outputs;
  outputs["report"] = (args.out_dir / "report.csv").string();
  write_run_manifest(args.out_dir / "run_manifest.json", "eval", config,
                     inputs, outputs, seconds_since(start));

  log << "evaluated " << n_test << " test epochs: pooled F1 "
      << fmt_double(report.pooled.prf.f1) << ", CardErr "
      << fmt_double(report.pooled.card_err_mean) << " -> "
      << args.out_dir.string() << "\n";
}

// ---------------------------------------------------------------------------
// budget
// ---------------------------------------------------------------------------

void cmd_budget(const BudgetArgs& args, std::ostream& out) {
  const std::size_t T =
      static_cast<std::size_t>(std::lround(args.epoch_seconds * args.fs));
  const diff::ModelBudget bu = models::count_budget_unet(args.unet, T);
  const diff::ModelBudget bd = models::count_budget_detr(args.detr, T);

  const auto mm = [](long long v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", static_cast<double>(v) / 1e6);
    return std::string(buf);
  };
  const auto gg = [](long long v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", static_cast<double>(v) / 1e9);
    return std::string(buf);
  };

  out << "budget for " << fmt_double(args.epoch_seconds) << " s epochs at "
      << fmt_double(args.fs) << " Hz (T=" << T << ", forward pass)\n";
  out << "model  params[M] (backbone)  flops[G] (backbone)  params_raw  flops_raw\n";
  out << "unet   " << mm(bu.params_total) << " (" << mm(bu.params_backbone)
      << " BB)   " << gg(bu.flops_total) << " (" << gg(bu.flops_backbone)
      << " BB)   " << bu.params_total << "  " << bu.flops_total << "\n";
  out << "detr   " << mm(bd.params_total) << " (" << mm(bd.params_backbone)
      << " BB)   " << gg(bd.flops_total) << " (" << gg(bd.flops_backbone)
      << " BB)   " << bd.params_total << "  " << bd.flops_total << "\n";

  const auto pct = [](long long from, long long to) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f",
                  100.0 * (1.0 - static_cast<double>(to) /
                                     static_cast<double>(from)));
    return std::string(buf);
  };
  out << "reduction (unet -> detr): params " << pct(bu.params_total, bd.params_total)
      << "%, flops " << pct(bu.flops_total, bd.flops_total) << "%\n";
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

namespace {

struct PerEpochRow {
  std::string subject;
  int epoch_index = 0;
  double f1 = 0.0;
  bool has_rr = false;
  double rr_ms = 0.0;
  double card_err = 0.0;
};

struct EvalOutput {
  std::vector<PerEpochRow> rows;
  std::vector<std::pair<std::string, double>> subject_f1;  // scope -> f1
  double pooled_f1 = 0.0;
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw InvalidInput("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    rows.push_back(split_csv_line(line));
  }
  if (rows.empty()) throw InvalidInput(path.string() + " is empty");
  return rows;
}

EvalOutput read_eval_dir(const fs::path& dir) {
  EvalOutput out;
  const auto per_epoch = read_csv(dir / "per_epoch.csv");
  for (std::size_t i = 1; i < per_epoch.size(); ++i) {
    const auto& cells = per_epoch[i];
    if (cells.size() < 11)
      throw InvalidInput(dir.string() + "/per_epoch.csv: malformed row");
    PerEpochRow row;
    row.subject = cells[0];
    row.epoch_index = std::stoi(cells[1]);
    row.f1 = std::stod(cells[5]);
    row.has_rr = !cells[9].empty();
    if (row.has_rr) row.rr_ms = std::stod(cells[9]);
    row.card_err = std::stod(cells[10]);
    out.rows.push_back(row);
  }
  const auto report = read_csv(dir / "report.csv");
  for (std::size_t i = 1; i < report.size(); ++i) {
    const auto& cells = report[i];
    if (cells.size() < 8)
      throw InvalidInput(dir.string() + "/report.csv: malformed row");
    if (cells[0] == "pooled")
      out.pooled_f1 = std::stod(cells[7]);
    else
      out.subject_f1.emplace_back(cells[0], std::stod(cells[7]));
  }
  return out;
}

}  // namespace

void cmd_report(const ReportArgs& args, std::ostream& log) {
  const auto start = Clock::now();
  if (!fs::exists(args.eval_a / "per_epoch.csv") ||
      !fs::exists(args.eval_b / "per_epoch.csv"))
    throw InvalidInput("report: both inputs must be completed eval outputs");

  const EvalOutput a = read_eval_dir(args.eval_a);
  const EvalOutput b = read_eval_dir(args.eval_b);

  if (a.rows.size() != b.rows.size())
    throw InvalidInput("report: the two evaluations cover different test sets");
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    if (a.rows[i].subject != b.rows[i].subject ||
        a.rows[i].epoch_index != b.rows[i].epoch_index)
      throw InvalidInput("report: the two evaluations cover different test sets");
  }
  if (a.subject_f1.size() != b.subject_f1.size())
    throw InvalidInput("report: subject sets differ between evaluations");

  fs::create_directories(args.out_dir);

  std::string cmp = "scope,f1_" + args.label_a + ",f1_" + args.label_b +
                    ",delta\n";
  cmp += "pooled," + fmt_double(a.pooled_f1) + "," + fmt_double(b.pooled_f1) +
         "," + fmt_double(b.pooled_f1 - a.pooled_f1) + "\n";
  for (std::size_t i = 0; i < a.subject_f1.size(); ++i) {
    if (a.subject_f1[i].first != b.subject_f1[i].first)
      throw InvalidInput("report: subject sets differ between evaluations");
    cmp += a.subject_f1[i].first + "," + fmt_double(a.subject_f1[i].second) +
           "," + fmt_double(b.subject_f1[i].second) + "," +
           fmt_double(b.subject_f1[i].second - a.subject_f1[i].second) + "\n";
  }
  dataio::atomic_write(args.out_dir / "subject_f1.csv", cmp);

  std::vector<double> f1a, f1b, rra, rrb, ca, cb;
  for (const auto& r : a.rows) {
    f1a.push_back(r.f1);
    if (r.has_rr) rra.push_back(r.rr_ms);
    ca.push_back(r.card_err);
  }
  for (const auto& r : b.rows) {
    f1b.push_back(r.f1);
    if (r.has_rr) rrb.push_back(r.rr_ms);
    cb.push_back(r.card_err);
  }
  dataio::atomic_write(
      args.out_dir / "report_f1.svg",
      svgplot::violin_svg("F1-score",
                          {{args.label_a, f1a}, {args.label_b, f1b}}));
  dataio::atomic_write(
      args.out_dir / "report_rrerr.svg",
      svgplot::violin_svg("RR interval error (ms)",
                          {{args.label_a, rra}, {args.label_b, rrb}}));
  dataio::atomic_write(
      args.out_dir / "report_carderr.svg",
      svgplot::violin_svg("Cardinality error",
                          {{args.label_a, ca}, {args.label_b, cb}}));

  json config;
  config["eval_a"] = args.eval_a.string();
  config["eval_b"] = args.eval_b.string();
  config["label_a"] = args.label_a;
  config["label_b"] = args.label_b;
  json outputs;
  outputs["subject_f1"] = (args.out_dir / "subject_f1.csv").string();
  write_run_manifest(args.out_dir / "run_manifest.json", "report", config,
                     json::object(), outputs, seconds_since(start));

  log << "report: pooled F1 " << args.label_a << "=" << fmt_double(a.pooled_f1)
      << " " << args.label_b << "=" << fmt_double(b.pooled_f1) << " -> "
      << args.out_dir.string() << "\n";
}

}  // namespace bcg::pipeline
