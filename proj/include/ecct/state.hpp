// Copyright 2026 The ECCT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

// Participant and cloud state shared by the training loops and evaluation.

#pragma once

#include <optional>
#include <vector>

#include "ecct/config.hpp"
#include "ecct/datagen.hpp"
#include "ecct/nn.hpp"
#include "ecct/rng.hpp"
#include "ecct/transfer.hpp"

namespace ecct {

using data::SampleId;

/// Read-only data every participant may consult.
struct Environment {
  const TrainingConfig* cfg = nullptr;
  const data::FeatureSplitDataset* dataset = nullptr;
  data::DevicePartition partition;
  data::FeatureView view;

  Environment(const TrainingConfig& config, const data::FeatureSplitDataset& ds, data::DevicePartition part)
      : cfg(&config), dataset(&ds), partition(std::move(part)), view(ds, config.feature_setting) {}
};

struct EdgeModel {
  nn::DenseNetd encoder;
  nn::DenseNetd classifier;

  /// True when the classifier consumes [h_d | h_s] rather than h_d alone.
  bool fuses() const { return classifier.input_dim() == 2 * encoder.output_dim(); }
};

struct ParticipantState {
  int device_id = 0;
  EdgeModel model;
  nn::Optimizerd encoder_opt;
  nn::Optimizerd classifier_opt;
  std::uint64_t model_version = 0;
  transfer::KnowledgeStore store;    // knowledge received from the cloud
  transfer::KnowledgeBuffer buffer;  // knowledge waiting to go to the cloud
  std::vector<transfer::KnowledgePacket> outbox;
  std::vector<SampleId> train_ids;
  std::vector<SampleId> test_ids;
  Rng batch_rng;
  Rng async_rng;
  Rng privacy_rng;
  int version_period = 1;
  /// FedAvg: the next selected round starts from the global parameters.
  bool needs_global = true;

  std::vector<SampleId> local_ids() const;
};

struct CloudState {
  bool active = false;
  std::optional<nn::DenseNetd> encoder;  // absent when the cloud trains on device embeddings only
  nn::DenseNetd classifier;
  nn::Optimizerd encoder_opt;
  nn::Optimizerd classifier_opt;
  std::uint64_t model_version = 0;
  std::vector<transfer::KnowledgeStore> stores;    // per device, knowledge from the edge
  std::vector<transfer::KnowledgeBuffer> buffers;  // per device, knowledge to the edge
  std::vector<std::vector<transfer::KnowledgePacket>> outbox;
  Rng batch_rng;
};

/// Hidden widths of device k's encoder: shared, or drawn per device when hetero.
std::vector<Eigen::Index> edge_encoder_widths(const TrainingConfig& cfg, int device);

/// Freshly initialized models, in the same order the simulator draws them.
EdgeModel make_edge_model(const TrainingConfig& cfg, const Environment& env, int device);

ParticipantState make_participant(const TrainingConfig& cfg, const Environment& env, int device);
CloudState make_cloud(const TrainingConfig& cfg, const Environment& env);

/// Checksum of every parameter, for freeze assertions.
std::uint64_t parameter_checksum(const nn::DenseNetd& net);

}  // namespace ecct
