// Copyright 2026 The ECCT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "json.hpp"

#include "ecct/state.hpp"

namespace ecct::eval {

using Eigen::Index;

inline constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

/// Fraction of rows whose lowest-index argmax equals the label.
double accuracy(const Eigen::MatrixXd& scores, std::span<const int> labels);
/// Fraction of binary predictions (score >= threshold) equal to the label.
double binary_accuracy(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);
/// Mann-Whitney AUC with average ranks for ties; NaN unless both classes occur.
double auc(std::span<const double> scores, std::span<const int> labels);
/// Brier score of positive-class probabilities against {0,1} labels.
double mse(std::span<const double> probabilities, std::span<const int> labels);

struct Inference {
  Eigen::MatrixXd probabilities;  // [n x C]
  Index zero_filled = 0;
};

/// Edge-based inference: fresh h_d, stored h_s (zero-filled when absent),
/// device classifier.
Inference infer_edge(const EdgeModel& model, const transfer::KnowledgeStore* store, const data::FeatureView& view,
                     std::span<const SampleId> ids);
inline Inference infer_edge(const ParticipantState& p, const data::FeatureView& view, std::span<const SampleId> ids) {
  return infer_edge(p.model, &p.store, view, ids);
}

/// Cloud-based inference for samples of `device`: fresh h_s, stored h_d,
/// cloud classifier. Requires an active cloud.
Inference infer_cloud(const CloudState& cloud, int device, const data::FeatureView& view,
                      std::span<const SampleId> ids);

struct SideMetrics {
  double accuracy = kUndefined;
  double auc = kUndefined;
  double mse = kUndefined;
  Index correct = 0;
  Index zero_filled = 0;
};

struct DeviceMetrics {
  int device = 0;
  Index test_samples = 0;
  SideMetrics edge;
  SideMetrics cloud;
  bool trained = false;
  int epochs = 0;
  double loss = kUndefined;
  std::uint64_t version = 0;
};

struct RoundReport {
  int round = -1;
  std::vector<DeviceMetrics> devices;
  double edge_accuracy_mean = kUndefined;
  double edge_accuracy_std = kUndefined;
  double edge_accuracy_pooled = kUndefined;
  double cloud_accuracy_mean = kUndefined;
  double cloud_accuracy_pooled = kUndefined;
  double edge_auc_pooled = kUndefined;
  double edge_mse_pooled = kUndefined;
  double cloud_auc_pooled = kUndefined;
  double cloud_mse_pooled = kUndefined;
  double device_loss_mean = kUndefined;
  double cloud_loss = kUndefined;
  bool cloud_skipped = false;
  int devices_trained = 0;
  Index packets_up = 0;
  Index packets_down = 0;
  Index rows_up = 0;
  Index rows_down = 0;
  Index bytes_up = 0;
  Index bytes_down = 0;
  double staleness_edge = 0;   // mean version lag of cloud knowledge held by devices
  double staleness_cloud = 0;  // mean version lag of device knowledge held by the cloud
  Index zero_filled = 0;       // evaluation rows that used a zero-filled counterpart
  Index teacher_missing = 0;   // minibatches trained without any counterpart logits
  Index join_errors = 0;
};

/// Scores every device's local test set with both strategies and fills the
/// metric and aggregate fields of a report. `global_model`, when given,
/// replaces each device's own model for edge-based scoring (FedAvg).
RoundReport evaluate(int round, const std::vector<ParticipantState>& participants, const CloudState* cloud,
                     const Environment& env, const EdgeModel* global_model = nullptr);

nlohmann::json to_json(const RoundReport& report);
RoundReport report_from_json(const nlohmann::json& j);

}  // namespace ecct::eval
