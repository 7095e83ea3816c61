#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bcg/core.hpp"
#include "bcg/diff.hpp"
#include "bcg/models.hpp"

// On-disk dataset layout, chronological splitting, and checkpoints.
//
// Dataset directory:
//   manifest.json                         human-readable index
//   <subject>/e<index>.sig                binary signal (f64 little-endian)
//   <subject>/e<index>.ann                newline-separated peak indices
//
// Checkpoints are a single file: magic, JSON header (model kind, config,
// training history, array index), then raw f64 payloads. Round-trips are
// bit-exact.

namespace bcg::dataio {

using json = nlohmann::ordered_json;

struct EpochFileRef {
  int epoch_index = 0;  // contiguous from 0 within the subject
  std::string signal_path;
  std::string ann_path;
};

struct SubjectEntry {
  std::string subject_id;
  std::vector<EpochFileRef> epochs;  // chronological order
};

struct DatasetManifest {
  double fs = 0.0;
  double epoch_seconds = 0.0;
  std::vector<SubjectEntry> subjects;
};

struct EpochRecord {
  core::SignalEpoch epoch;
  core::PeakAnnotation ann;
};

struct Dataset {
  DatasetManifest manifest;
  // Flat, in manifest order (subject-major, then epoch_index).
  std::vector<EpochRecord> epochs;
};

void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

struct SplitRef {
  std::string subject_id;
  int epoch_index = 0;
  std::size_t flat_index = 0;  // into Dataset::epochs
};

struct Split {
  std::vector<SplitRef> train;
  std::vector<SplitRef> test;
};

// Per subject: the first ceil(train_fraction*n) epochs train, the rest
// test. Purely a function of the manifest and the fraction.
Split chronological_split(const Dataset& data, double train_fraction);

// ---- Checkpoints ----

struct LoadedCheckpoint {
  std::string model_kind;  // "unet" | "detr"
  json config;
  json history;
  std::vector<std::pair<std::string, diff::Tensor>> arrays;
};

void save_checkpoint(const std::filesystem::path& path,
                     const std::string& model_kind, const json& config,
                     const json& history, const diff::ParamStore& params);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Copies checkpoint arrays into the store; the name and shape sets must
// match exactly in both directions.
void fill_params(diff::ParamStore& store, const LoadedCheckpoint& ckpt);

// ---- Model-config JSON ----

json backbone_to_json(const models::BackboneConfig& cfg);
models::BackboneConfig backbone_from_json(const json& j);
json unet_to_json(const models::UNetConfig& cfg);
models::UNetConfig unet_from_json(const json& j);
json detr_to_json(const models::DetrConfig& cfg);
models::DetrConfig detr_from_json(const json& j);

// Write-then-rename so readers never observe partial files.
void atomic_write(const std::filesystem::path& path, const std::string& bytes);

}  // namespace bcg::dataio
