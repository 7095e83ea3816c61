#include "bcg/dataio.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian");

namespace bcg::dataio {

namespace fs = std::filesystem;

namespace {

constexpr char kSigMagic[8] = {'B', 'C', 'G', 'S', 'I', 'G', '1', '\0'};
constexpr char kCkptMagic[8] = {'B', 'C', 'G', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::string& out, const T& x) {
  const char* p = reinterpret_cast<const char*>(&x);
  out.append(p, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& off, const std::string& what) {
  if (off + sizeof(T) > in.size())
    throw InvalidInput("truncated file while reading " + what);
  T x;
  std::memcpy(&x, in.data() + off, sizeof(T));
  off += sizeof(T);
  return x;
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidInput("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return std::move(ss).str();
}

std::string sig_bytes(const core::SignalEpoch& epoch) {
  std::string out;
  out.append(kSigMagic, sizeof(kSigMagic));
  put<std::uint32_t>(out, 1);  // version
  put<std::uint32_t>(out, static_cast<std::uint32_t>(epoch.subject_id.size()));
  out.append(epoch.subject_id);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(epoch.epoch_index));
  put<double>(out, epoch.fs);
  put<std::uint64_t>(out, epoch.samples.size());
  out.append(reinterpret_cast<const char*>(epoch.samples.data()),
             epoch.samples.size() * sizeof(double));
  return out;
}

core::SignalEpoch parse_sig(const std::string& bytes, const std::string& name) {
  std::size_t off = 0;
  if (bytes.size() < sizeof(kSigMagic) ||
      std::memcmp(bytes.data(), kSigMagic, sizeof(kSigMagic)) != 0)
    throw InvalidInput(name + ": not a signal file");
  off = sizeof(kSigMagic);
  const auto version = take<std::uint32_t>(bytes, off, name);
  if (version != 1) throw InvalidInput(name + ": unsupported version");
  const auto id_len = take<std::uint32_t>(bytes, off, name);
  if (off + id_len > bytes.size()) throw InvalidInput(name + ": truncated id");
  core::SignalEpoch epoch;
  epoch.subject_id = bytes.substr(off, id_len);
  off += id_len;
  epoch.epoch_index = static_cast<int>(take<std::uint32_t>(bytes, off, name));
  epoch.fs = take<double>(bytes, off, name);
  const auto T = take<std::uint64_t>(bytes, off, name);
  if (off + T * sizeof(double) != bytes.size())
    throw InvalidInput(name + ": payload size mismatch");
  epoch.samples.resize(T);
  std::memcpy(epoch.samples.data(), bytes.data() + off, T * sizeof(double));
  return epoch;
}

std::string ann_bytes(const core::PeakAnnotation& ann) {
  std::string out;
  for (int p : ann.peaks) {
    out += std::to_string(p);
    out += '\n';
  }
  return out;
}

core::PeakAnnotation parse_ann(const std::string& bytes,
                               const std::string& name) {
  core::PeakAnnotation ann;
  std::istringstream ss(bytes);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    std::size_t pos = 0;
    int value = 0;
    try {
      value = std::stoi(line, &pos);
    } catch (const std::exception&) {
      throw InvalidInput(name + ": malformed annotation line '" + line + "'");
    }
    if (pos != line.size())
      throw InvalidInput(name + ": malformed annotation line '" + line + "'");
    ann.peaks.push_back(value);
  }
  return ann;
}

}  // namespace

void atomic_write(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw InvalidInput("cannot write " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw InvalidInput("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

void save_dataset(const Dataset& data, const fs::path& dir) {
  fs::create_directories(dir);

  json manifest;
  manifest["format"] = "bcg-dataset";
  manifest["version"] = 1;
  manifest["fs"] = data.manifest.fs;
  manifest["epoch_seconds"] = data.manifest.epoch_seconds;
  manifest["subjects"] = json::array();

  std::size_t flat = 0;
  for (const auto& subject : data.manifest.subjects) {
    json js;
    js["subject_id"] = subject.subject_id;
    js["epochs"] = json::array();
    fs::create_directories(dir / subject.subject_id);
    for (const auto& ref : subject.epochs) {
      if (flat >= data.epochs.size())
        throw InvalidInput("save_dataset: manifest/epoch count mismatch");
      const EpochRecord& rec = data.epochs[flat++];
      core::validate_epoch(rec.epoch);
      core::validate_annotation(rec.ann, rec.epoch.length());
      atomic_write(dir / ref.signal_path, sig_bytes(rec.epoch));
      atomic_write(dir / ref.ann_path, ann_bytes(rec.ann));
      json je;
      je["epoch_index"] = ref.epoch_index;
      je["signal"] = ref.signal_path;
      je["annotations"] = ref.ann_path;
      js["epochs"].push_back(je);
    }
    manifest["subjects"].push_back(js);
  }
  if (flat != data.epochs.size())
    throw InvalidInput("save_dataset: manifest/epoch count mismatch");
  atomic_write(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  if (!fs::exists(mpath))
    throw InvalidInput("no manifest.json under " + dir.string());
  json manifest;
  try {
    manifest = json::parse(read_file(mpath));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("malformed manifest.json: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "bcg-dataset")
    throw InvalidInput("manifest.json: not a bcg-dataset manifest");

  Dataset data;
  data.manifest.fs = manifest.at("fs").get<double>();
  data.manifest.epoch_seconds = manifest.at("epoch_seconds").get<double>();
  if (!(data.manifest.fs > 0.0))
    throw InvalidInput("manifest.json: fs must be > 0");

  for (const auto& js : manifest.at("subjects")) {
    SubjectEntry subject;
    subject.subject_id = js.at("subject_id").get<std::string>();
    int expect_index = 0;
    for (const auto& je : js.at("epochs")) {
      EpochFileRef ref;
      ref.epoch_index = je.at("epoch_index").get<int>();
      ref.signal_path = je.at("signal").get<std::string>();
      ref.ann_path = je.at("annotations").get<std::string>();
      if (ref.epoch_index != expect_index++)
        throw InvalidInput("subject " + subject.subject_id +
                           ": epoch_index values must be contiguous from 0");

      const std::string tag =
          subject.subject_id + "/e" + std::to_string(ref.epoch_index);
      EpochRecord rec;
      rec.epoch = parse_sig(read_file(dir / ref.signal_path), tag);
      rec.ann = parse_ann(read_file(dir / ref.ann_path), tag);
      if (rec.epoch.subject_id != subject.subject_id)
        throw InvalidInput(tag + ": subject id mismatch inside signal file");
      if (rec.epoch.epoch_index != ref.epoch_index)
        throw InvalidInput(tag + ": epoch_index mismatch inside signal file");
      if (rec.epoch.fs != data.manifest.fs)
        throw InvalidInput(tag + ": sampling rate differs from manifest");
      core::validate_epoch(rec.epoch);
      try {
        core::validate_annotation(rec.ann, rec.epoch.length());
      } catch (const InvalidInput& e) {
        throw InvalidInput(tag + ": " + e.what());
      }
      subject.epochs.push_back(ref);
      data.epochs.push_back(std::move(rec));
    }
    if (subject.epochs.empty())
      throw InvalidInput("subject " + subject.subject_id + " has no epochs");
    data.manifest.subjects.push_back(std::move(subject));
  }
  return data;
}

Split chronological_split(const Dataset& data, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw InvalidInput("train_fraction must lie in (0,1)");

  Split split;
  std::size_t flat = 0;
  for (const auto& subject : data.manifest.subjects) {
    const std::size_t n = subject.epochs.size();
    if (n < 2)
      throw InvalidInput("subject " + subject.subject_id +
                         " has fewer than 2 epochs; cannot split");
    const auto n_train = static_cast<std::size_t>(
        std::ceil(train_fraction * static_cast<double>(n)));
    for (std::size_t i = 0; i < n; ++i, ++flat) {
      SplitRef ref{subject.subject_id, subject.epochs[i].epoch_index, flat};
      (i < n_train ? split.train : split.test).push_back(ref);
    }
  }
  return split;
}

// ---- Checkpoints ----

void save_checkpoint(const fs::path& path, const std::string& model_kind,
                     const json& config, const json& history,
                     const diff::ParamStore& params) {
  json header;
  header["format"] = "bcg-checkpoint";
  header["version"] = 1;
  header["model"] = model_kind;
  header["config"] = config;
  header["history"] = history;
  header["arrays"] = json::array();
  for (const auto& p : params.all()) {
    json ja;
    ja["name"] = p.name;
    ja["shape"] = p.value.shape;
    header["arrays"].push_back(ja);
  }

  std::string out;
  out.append(kCkptMagic, sizeof(kCkptMagic));
  const std::string hdr = header.dump();
  put<std::uint64_t>(out, hdr.size());
  out.append(hdr);
  for (const auto& p : params.all())
    out.append(reinterpret_cast<const char*>(p.value.v.data()),
               p.value.v.size() * sizeof(double));
  atomic_write(path, out);
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < sizeof(kCkptMagic) ||
      std::memcmp(bytes.data(), kCkptMagic, sizeof(kCkptMagic)) != 0)
    throw InvalidInput(path.string() + ": not a checkpoint file");
  std::size_t off = sizeof(kCkptMagic);
  const auto hdr_len = take<std::uint64_t>(bytes, off, "checkpoint header");
  if (off + hdr_len > bytes.size())
    throw InvalidInput(path.string() + ": truncated header");
  json header;
  try {
    header = json::parse(bytes.substr(off, hdr_len));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(path.string() + ": malformed header: " + e.what());
  }
  off += hdr_len;

  LoadedCheckpoint ckpt;
  ckpt.model_kind = header.at("model").get<std::string>();
  ckpt.config = header.at("config");
  ckpt.history = header.value("history", json::array());
  for (const auto& ja : header.at("arrays")) {
    diff::Tensor t = diff::Tensor::zeros(
        ja.at("shape").get<std::vector<std::size_t>>());
    if (off + t.size() * sizeof(double) > bytes.size())
      throw InvalidInput(path.string() + ": truncated array payload");
    std::memcpy(t.v.data(), bytes.data() + off, t.size() * sizeof(double));
    off += t.size() * sizeof(double);
    ckpt.arrays.emplace_back(ja.at("name").get<std::string>(), std::move(t));
  }
  if (off != bytes.size())
    throw InvalidInput(path.string() + ": trailing bytes after payload");
  return ckpt;
}

void fill_params(diff::ParamStore& store, const LoadedCheckpoint& ckpt) {
  if (ckpt.arrays.size() != store.count())
    throw InvalidInput("checkpoint/architecture mismatch: expected " +
                       std::to_string(store.count()) + " arrays, found " +
                       std::to_string(ckpt.arrays.size()));
  for (const auto& [name, tensor] : ckpt.arrays) {
    const int pid = store.find(name);
    if (pid < 0)
      throw InvalidInput("checkpoint/architecture mismatch: unknown array '" +
                         name + "'");
    diff::Parameter& p = store.at(pid);
    if (p.value.shape != tensor.shape)
      throw InvalidInput("checkpoint/architecture mismatch: shape of '" +
                         name + "' differs");
    p.value.v = tensor.v;
  }
}

// ---- Model-config JSON ----

json backbone_to_json(const models::BackboneConfig& cfg) {
  json j;
  j["widths"] = cfg.widths;
  j["kernels"] = cfg.kernels;
  j["strides"] = cfg.strides;
  return j;
}

models::BackboneConfig backbone_from_json(const json& j) {
  models::BackboneConfig cfg;
  cfg.widths = j.at("widths").get<std::vector<int>>();
  cfg.kernels = j.at("kernels").get<std::vector<int>>();
  cfg.strides = j.at("strides").get<std::vector<int>>();
  cfg.validate();
  return cfg;
}

json unet_to_json(const models::UNetConfig& cfg) {
  json j;
  j["backbone"] = backbone_to_json(cfg.backbone);
  j["decoder_widths"] = cfg.decoder_widths;
  return j;
}

models::UNetConfig unet_from_json(const json& j) {
  models::UNetConfig cfg;
  cfg.backbone = backbone_from_json(j.at("backbone"));
  cfg.decoder_widths = j.at("decoder_widths").get<std::vector<int>>();
  cfg.validate();
  return cfg;
}

json detr_to_json(const models::DetrConfig& cfg) {
  json j;
  j["backbone"] = backbone_to_json(cfg.backbone);
  j["d_model"] = cfg.d_model;
  j["enc_layers"] = cfg.enc_layers;
  j["dec_layers"] = cfg.dec_layers;
  j["heads"] = cfg.heads;
  j["ffn_dim"] = cfg.ffn_dim;
  j["num_queries"] = cfg.num_queries;
  j["aux_head"] = cfg.aux_head;
  return j;
}

models::DetrConfig detr_from_json(const json& j) {
  models::DetrConfig cfg;
  cfg.backbone = backbone_from_json(j.at("backbone"));
  cfg.d_model = j.at("d_model").get<int>();
  cfg.enc_layers = j.at("enc_layers").get<int>();
  cfg.dec_layers = j.at("dec_layers").get<int>();
  cfg.heads = j.at("heads").get<int>();
  cfg.ffn_dim = j.at("ffn_dim").get<int>();
  cfg.num_queries = j.at("num_queries").get<int>();
  cfg.aux_head = j.at("aux_head").get<bool>();
  cfg.validate();
  return cfg;
}

}  // namespace bcg::dataio
