// Copyright 2026 The ECCT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ecct::data {

using Index = Eigen::Index;
using SampleId = std::int64_t;

/// Samples whose features are split between the edge (federated part) and
/// the cloud (centralized part). Sample ids are the row indices [0, N).
struct FeatureSplitDataset {
  Eigen::MatrixXd fed;  // [N x d_f]
  Eigen::MatrixXd cen;  // [N x d_c]
  std::vector<int> labels;
  int num_classes = 0;

  Index size() const { return static_cast<Index>(labels.size()); }
  Index fed_dim() const { return fed.cols(); }
  Index cen_dim() const { return cen.cols(); }

  /// Throws InputError when an invariant is broken.
  void validate() const;
};

struct SyntheticSpec {
  int classes = 10;
  Index samples = 20000;
  Index fed_dim = 8;
  Index cen_dim = 24;
  double separation = 4.0;
  std::uint64_t seed = 1;
};

/// Gaussian mixture: class c has a random mean direction in the full
/// (d_f + d_c)-space scaled to norm `separation`, samples are unit-variance
/// around it. The first d_f coordinates become the federated part.
FeatureSplitDataset generate_synthetic(const SyntheticSpec& spec);

struct CsvSchema {
  std::vector<std::string> federated;
  std::vector<std::string> centralized;
  std::string label;
};

/// Parses a headered CSV and standardizes every feature column with the
/// statistics of `train_rows` (all rows when empty).
FeatureSplitDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema,
                             std::span<const SampleId> train_rows = {});

/// Writes the dataset with the schema's column names (federated, centralized,
/// label), or f<i>/c<i>/label when the schema is empty.
void write_csv(const FeatureSplitDataset& dataset, const std::filesystem::path& path, const CsvSchema& schema = {});

/// Column-wise zero mean / unit variance using the rows in `train_rows`.
/// Columns with variance below 1e-12 become exactly zero.
void standardize(FeatureSplitDataset& dataset, std::span<const SampleId> train_rows = {});

struct DevicePartition {
  std::vector<std::vector<SampleId>> train;  // per device
  std::vector<std::vector<SampleId>> test;   // per device
  double test_ratio = 0.2;

  int num_devices() const { return static_cast<int>(train.size()); }
  std::vector<SampleId> assignment(int device) const;
  std::vector<SampleId> all_train() const;
  /// Disjointness, coverage-by-construction and non-empty splits.
  void validate(Index dataset_size) const;
};

DevicePartition partition_iid(const FeatureSplitDataset& dataset, int devices, std::uint64_t seed,
                              double test_ratio = 0.2);

/// Per-class Dirichlet(alpha) proportions across devices, samples placed
/// multinomially. Redrawn until every device holds at least one train and
/// one test sample; gives up after 100 attempts.
DevicePartition partition_dirichlet(const FeatureSplitDataset& dataset, int devices, double alpha,
                                    std::uint64_t seed, double test_ratio = 0.2);

enum class FeatureSetting { kF, kC2F, kCandF };

const char* to_string(FeatureSetting s);
FeatureSetting feature_setting_from_string(const std::string& s);

/// Which features each role sees under a feature setting.
class FeatureView {
 public:
  FeatureView(const FeatureSplitDataset& dataset, FeatureSetting setting);

  FeatureSetting setting() const { return setting_; }
  Index device_dim() const;
  Index cloud_dim() const;

  Eigen::VectorXd device_features(SampleId id) const;
  Eigen::VectorXd cloud_features(SampleId id) const;
  Eigen::MatrixXd device_rows(std::span<const SampleId> ids) const;
  Eigen::MatrixXd cloud_rows(std::span<const SampleId> ids) const;

 private:
  const FeatureSplitDataset* data_;
  FeatureSetting setting_;
};

inline FeatureView feature_view(const FeatureSplitDataset& dataset, FeatureSetting setting) {
  return FeatureView(dataset, setting);
}

/// Per-class sample counts of `ids`.
std::vector<Index> label_histogram(const FeatureSplitDataset& dataset, std::span<const SampleId> ids);

}  // namespace ecct::data
