// Copyright 2026 The ECCT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

// Round-based training loops: ECCT alternating minimization between the
// cloud and K devices, plus the FedAvg and FedGKT-style baselines.

#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "ecct/config.hpp"
#include "ecct/datagen.hpp"
#include "ecct/eval.hpp"
#include "ecct/state.hpp"
#include "ecct/transfer.hpp"

namespace ecct {

/// Dataset described by `cfg.data`. CSV data is standardized with the
/// statistics of the training rows of `partition` when one is given.
data::FeatureSplitDataset build_dataset(const TrainingConfig& cfg);
data::DevicePartition build_partition(const TrainingConfig& cfg, const data::FeatureSplitDataset& dataset);

/// ceil(ratio * K) distinct devices, uniformly without replacement, ascending.
std::vector<int> select_devices(int devices, int count, Rng& rng);

struct AsyncDecision {
  int epochs = 1;
  bool communicates = true;
};

/// Effective local epochs and communication for `p`'s next local round.
/// Draws from the participant's async stream only under asyn_epoch/asyn_both.
AsyncDecision apply_async_mode(const TrainingConfig& cfg, ParticipantState& p);

struct EdgeRoundStats {
  double loss = 0;  // mean minibatch objective over the round
  int epochs = 0;
  Eigen::Index batches = 0;
  Eigen::Index teacher_missing = 0;
  Eigen::Index zero_filled = 0;
  std::size_t fragments = 0;
};

/// One local round on device `p`: `epochs` passes of minibatch training,
/// then a knowledge fragment over all local samples is buffered. Packets
/// flushed by the buffer are appended to `p.outbox`. Stored cloud knowledge
/// is read but never modified. FedAvg passes `emit_knowledge = false`.
EdgeRoundStats edge_train_round(ParticipantState& p, const Environment& env, int round, int epochs,
                                bool emit_knowledge = true);

struct CloudRoundStats {
  bool skipped = false;
  double loss = 0;
  Eigen::Index batches = 0;
  Eigen::Index rows = 0;
  Eigen::Index join_errors = 0;
};

/// One cloud round over the union of labeled edge knowledge, then fragments
/// for every device in `recipients` are buffered into `c.outbox`. A cloud
/// with no labeled knowledge skips without changing its version.
CloudRoundStats cloud_train_round(CloudState& c, const Environment& env, int round, std::span<const int> recipients);

/// Replaces `global` by sum_k (N^k / sum_j N^j) * params_k over `uploaders`.
void fedavg_aggregate(EdgeModel& global, const std::vector<const EdgeModel*>& uploaders,
                      const std::vector<double>& sample_counts);

/// Stateful simulation; `step` advances one round. The event log, when
/// attached, records every delivered packet.
class Simulation {
 public:
  explicit Simulation(TrainingConfig cfg);
  Simulation(TrainingConfig cfg, data::FeatureSplitDataset dataset, data::DevicePartition partition);

  const TrainingConfig& config() const { return cfg_; }
  const Environment& environment() const { return *env_; }
  const data::FeatureSplitDataset& dataset() const { return *dataset_; }
  std::vector<ParticipantState>& participants() { return participants_; }
  const std::vector<ParticipantState>& participants() const { return participants_; }
  CloudState& cloud() { return cloud_; }
  const CloudState& cloud() const { return cloud_; }
  /// FedAvg global model; empty for other methods.
  const std::optional<EdgeModel>& global_model() const { return global_; }
  int next_round() const { return round_; }
  bool finished() const { return round_ >= cfg_.rounds; }

  void attach_event_log(transfer::EventLog* log) { events_ = log; }

  /// Report for the untrained models (round -1).
  eval::RoundReport initial_report() const;
  eval::RoundReport step();

 private:
  void init();
  void step_ecct_or_gkt(eval::RoundReport& report, const std::vector<int>& selected);
  void step_fedavg(eval::RoundReport& report, const std::vector<int>& selected);
  void deliver(int device, eval::RoundReport& report);
  eval::RoundReport evaluate(int round) const;

  TrainingConfig cfg_;
  std::unique_ptr<data::FeatureSplitDataset> dataset_;
  std::unique_ptr<Environment> env_;
  std::vector<ParticipantState> participants_;
  CloudState cloud_;
  std::optional<EdgeModel> global_;
  Rng select_rng_;
  transfer::EventLog* events_ = nullptr;
  int round_ = 0;
};

struct RunResult {
  std::vector<eval::RoundReport> reports;  // round -1 first
};

/// Callback invoked after every report, in round order.
using ReportObserver = std::function<void(const eval::RoundReport&)>;

/// Runs every round of `cfg`. With `run_dir`, writes config.resolved,
/// metrics.jsonl, events.jsonl (and payloads.bin) and checkpoints/.
RunResult run(const TrainingConfig& cfg, const std::optional<std::filesystem::path>& run_dir = std::nullopt,
              const ReportObserver& observer = {});
RunResult run(Simulation& sim, const std::optional<std::filesystem::path>& run_dir = std::nullopt,
              const ReportObserver& observer = {});

RunResult run_ecct(TrainingConfig cfg);
RunResult run_fedavg(TrainingConfig cfg);
RunResult run_fedgkt(TrainingConfig cfg);

/// Mean pooled edge accuracy over the last min(window, R) rounds (the
/// initial report when R = 0).
double final_edge_accuracy(const RunResult& result, int window = 5);

/// Loads metrics.jsonl of a run directory.
std::vector<eval::RoundReport> load_metrics(const std::filesystem::path& run_dir);

}  // namespace ecct
