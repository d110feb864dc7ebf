// Copyright 2026 The ECCT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

// Comparison grids built from complete runs: feature settings, asynchrony
// regimes and device scaling. Each cell is the median over seeds.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ecct/config.hpp"
#include "ecct/orchestrator.hpp"

namespace ecct::experiments {

double median(std::vector<double> values);

struct Cell {
  std::vector<double> per_seed;  // final edge accuracy of each seed
  double value = eval::kUndefined;  // median over seeds
  /// Relative change vs the row/column's reference cell, in percent; NaN for the reference itself.
  double change_percent = eval::kUndefined;
  bool failed = false;  // the configuration is rejected (e.g. hetero FedAvg)
  std::string error;
};

struct Table {
  std::string name;
  std::string title;
  std::vector<std::string> rows;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> cells;  // [row][column]

  const Cell& at(const std::string& row, const std::string& column) const;
  std::string to_text() const;
  nlohmann::json to_json() const;
};

struct SuiteOptions {
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  int window = 5;
  /// Suite directory: table.txt, table.json and one run directory per member.
  std::optional<std::filesystem::path> dir;
  bool keep_runs = false;
  std::function<void(const std::string&)> progress;
};

/// One configuration run over every seed; the cell holds the median.
Cell run_cell(const TrainingConfig& cfg, const SuiteOptions& options, const std::string& label = {});

/// Methods x {IID, Dirichlet} rows, {homo, hetero} columns.
Table suite_feature_settings(const TrainingConfig& base, const SuiteOptions& options = {});
/// {sync, asyn_version, asyn_epoch, asyn_both} rows; FedAvg and ECCT at
/// select ratios 1.0 and 0.5 as columns; changes relative to each method's
/// sync/1.0 cell. Members run on Dirichlet partitions with E_d = 3; FedAvg
/// sees C2F features.
Table suite_async(const TrainingConfig& base, const SuiteOptions& options = {});
/// Method rows; K in {50, 100} x select ratio in {0.6, 0.3, 0.1} columns.
Table suite_scaling(const TrainingConfig& base, const SuiteOptions& options = {});

/// Runs a suite by name ("feature_settings", "async", "scaling") and writes
/// table.txt and table.json when `options.dir` is set.
Table run_suite(const std::string& name, const TrainingConfig& base, const SuiteOptions& options = {});

/// Base configurations used by the suites.
TrainingConfig feature_settings_member(const TrainingConfig& base, Method method, data::FeatureSetting setting,
                                       PartitionKind partition, bool hetero);
TrainingConfig async_member(const TrainingConfig& base, Method method, AsyncMode mode, double ratio);
TrainingConfig scaling_member(const TrainingConfig& base, Method method, int devices, double ratio);

}  // namespace ecct::experiments
