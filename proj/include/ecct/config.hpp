// Copyright 2026 The ECCT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "ecct/datagen.hpp"
#include "ecct/losses.hpp"
#include "ecct/nn.hpp"

namespace ecct {

enum class Method { kEcct, kFedAvg, kFedGkt };
enum class AsyncMode { kSync, kAsynVersion, kAsynEpoch, kAsynBoth };
enum class PartitionKind { kIid, kDirichlet };
enum class DataSource { kSynthetic, kCsv };

const char* to_string(Method m);
const char* to_string(AsyncMode m);
const char* to_string(PartitionKind p);
Method method_from_string(const std::string& s);
AsyncMode async_mode_from_string(const std::string& s);

struct DataConfig {
  DataSource source = DataSource::kSynthetic;
  int classes = 10;
  Eigen::Index samples = 20000;
  Eigen::Index fed_dim = 8;
  Eigen::Index cen_dim = 24;
  double separation = 4.0;
  std::string csv_path;
  data::CsvSchema csv_schema;
  PartitionKind partition = PartitionKind::kIid;
  double dirichlet_alpha = 0.5;
  double test_ratio = 0.2;
};

struct ModelConfig {
  Eigen::Index embedding_dim = 16;
  std::vector<Eigen::Index> edge_encoder = {32};
  std::vector<Eigen::Index> edge_classifier = {32};
  std::vector<Eigen::Index> cloud_encoder = {64};
  std::vector<Eigen::Index> cloud_classifier = {64};
  /// Per-device hidden widths of the edge encoder drawn from `hetero_widths`.
  bool hetero = false;
  std::vector<Eigen::Index> hetero_widths = {8, 16, 32};
};

struct AsyncConfig {
  /// Communication periods drawn per device under asyn_version.
  std::vector<int> version_periods = {1, 2, 3};
};

struct TransferConfig {
  std::size_t edge_buffer_capacity = 64;
  std::size_t cloud_buffer_capacity = 64;
};

struct PrivacyConfig {
  bool enabled = false;
  double clip_norm = std::numeric_limits<double>::infinity();
  double noise_sigma = 0.0;
};

struct OutputConfig {
  bool events = true;
  bool event_ids = true;
  bool payloads = false;
  bool checkpoints = true;
};

struct TrainingConfig {
  Method method = Method::kEcct;
  data::FeatureSetting feature_setting = data::FeatureSetting::kCandF;
  int devices = 20;
  int rounds = 100;
  int device_epochs = 1;
  /// Optional per-device E_d; empty or one entry per device.
  std::vector<int> device_epoch_overrides;
  int cloud_epochs = 3;
  double select_ratio = 1.0;
  AsyncMode async_mode = AsyncMode::kSync;
  AsyncConfig async;
  loss::LossConfig loss;
  DataConfig data;
  ModelConfig model;
  Eigen::Index batch_size = 32;
  nn::OptimizerSettings optimizer;
  TransferConfig transfer;
  PrivacyConfig privacy;
  OutputConfig output;
  /// Train the cloud and the selected devices on worker threads.
  bool parallel = false;
  std::uint64_t seed = 1;

  /// Throws ConfigError on any violated invariant.
  void validate() const;
  int device_epochs_for(int device) const;
  int selected_per_round() const;
};

/// Flat dotted-key view of every field, e.g. "loss.alpha_s" -> "1".
std::map<std::string, std::string> to_key_values(const TrainingConfig& cfg);
/// Sets one field by dotted key. Throws ConfigError on unknown key or bad value.
void set_config_value(TrainingConfig& cfg, const std::string& key, const std::string& value);
std::vector<std::string> config_keys();

/// Key/value text with [section] headers; keys inside a section are
/// prefixed with "<section>.". Lines starting with '#' or ';' are comments.
TrainingConfig parse_config(const std::string& text, TrainingConfig base = {});
TrainingConfig load_config(const std::filesystem::path& path, TrainingConfig base = {});
std::string format_config(const TrainingConfig& cfg);

}  // namespace ecct
