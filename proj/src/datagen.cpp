// Copyright 2026 The ECCT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecct/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "ecct/errors.hpp"
#include "ecct/rng.hpp"

namespace ecct::data {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

bool parse_double(const std::string& cell, double& out) {
  if (cell.empty()) return false;
  const char* first = cell.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, cell.data() + cell.size(), out);
  return ec == std::errc() && ptr == cell.data() + cell.size() && std::isfinite(out);
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// Splits each device's shuffled assignment into train and test tails.
DevicePartition split_devices(std::vector<std::vector<SampleId>> assigned, double test_ratio, Rng& rng,
                              bool shuffle) {
  DevicePartition p;
  p.test_ratio = test_ratio;
  for (auto& ids : assigned) {
    if (shuffle) std::shuffle(ids.begin(), ids.end(), rng);
    const auto n = static_cast<std::ptrdiff_t>(ids.size());
    const auto n_test = std::clamp<std::ptrdiff_t>(std::llround(test_ratio * static_cast<double>(n)), 1, n - 1);
    p.train.emplace_back(ids.begin(), ids.end() - n_test);
    p.test.emplace_back(ids.end() - n_test, ids.end());
  }
  return p;
}

void check_partition_args(const FeatureSplitDataset& dataset, int devices, double test_ratio) {
  if (devices < 1) throw ConfigError("need at least one device");
  if (dataset.size() < 2 * static_cast<Index>(devices))
    throw ConfigError("need at least two samples per device (N >= 2K)");
  if (!(test_ratio > 0 && test_ratio < 1)) throw ConfigError("test ratio must lie in (0, 1)");
}

}  // namespace

void FeatureSplitDataset::validate() const {
  const Index n = size();
  if (fed.rows() != n || cen.rows() != n) throw InputError("feature blocks disagree on sample count");
  if (fed_dim() + cen_dim() <= 0) throw InputError("dataset has no features");
  if (num_classes < 1) throw InputError("dataset needs at least one class");
  std::vector<bool> seen(static_cast<std::size_t>(num_classes), false);
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw InputError("label " + std::to_string(y) + " out of range");
    seen[static_cast<std::size_t>(y)] = true;
  }
  for (int c = 0; c < num_classes; ++c)
    if (!seen[static_cast<std::size_t>(c)]) throw InputError("class " + std::to_string(c) + " has no samples");
}

FeatureSplitDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw ConfigError("synthetic task needs at least two classes");
  if (spec.samples < spec.classes) throw ConfigError("synthetic task needs N >= C");
  if (spec.fed_dim < 0 || spec.cen_dim < 0 || spec.fed_dim + spec.cen_dim < 2)
    throw ConfigError("synthetic task needs d_f + d_c >= 2");
  if (!(spec.separation >= 0)) throw ConfigError("class separation must be nonnegative");

  Rng rng = make_rng(spec.seed, "synthetic");
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index dim = spec.fed_dim + spec.cen_dim;

  Eigen::MatrixXd means(spec.classes, dim);
  for (int c = 0; c < spec.classes; ++c) {
    Eigen::VectorXd dir(dim);
    for (Index j = 0; j < dim; ++j) dir(j) = normal(rng);
    means.row(c) = (spec.separation / dir.norm()) * dir.transpose();
  }

  FeatureSplitDataset ds;
  ds.num_classes = spec.classes;
  ds.labels.resize(static_cast<std::size_t>(spec.samples));
  for (Index i = 0; i < spec.samples; ++i) ds.labels[static_cast<std::size_t>(i)] = static_cast<int>(i % spec.classes);
  std::shuffle(ds.labels.begin(), ds.labels.end(), rng);

  Eigen::MatrixXd full(spec.samples, dim);
  for (Index i = 0; i < spec.samples; ++i)
    for (Index j = 0; j < dim; ++j) full(i, j) = means(ds.labels[static_cast<std::size_t>(i)], j) + normal(rng);
  ds.fed = full.leftCols(spec.fed_dim);
  ds.cen = full.rightCols(spec.cen_dim);
  return ds;
}

FeatureSplitDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema,
                             std::span<const SampleId> train_rows) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) throw InputError(path.string() + " is empty");
  const auto header = split_csv_line(line);
  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column.emplace(header[i], i);
  auto lookup = [&](const std::string& name) {
    const auto it = column.find(name);
    if (it == column.end()) throw SchemaError("column '" + name + "' not found in " + path.string());
    return it->second;
  };
  std::vector<std::size_t> fed_cols, cen_cols;
  for (const auto& n : schema.federated) fed_cols.push_back(lookup(n));
  for (const auto& n : schema.centralized) cen_cols.push_back(lookup(n));
  const std::size_t label_col = lookup(schema.label);

  std::vector<std::vector<double>> fed_rows, cen_rows;
  std::vector<int> labels;
  std::size_t row_number = 1;
  while (std::getline(in, line)) {
    ++row_number;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw InputError("row " + std::to_string(row_number) + ": expected " + std::to_string(header.size()) +
                       " cells, found " + std::to_string(cells.size()));
    auto cell_value = [&](std::size_t col) {
      double v = 0;
      if (!parse_double(cells[col], v))
        throw InputError("row " + std::to_string(row_number) + ": cannot parse '" + cells[col] + "' in column '" +
                         header[col] + "'");
      return v;
    };
    std::vector<double> f, c;
    for (auto col : fed_cols) f.push_back(cell_value(col));
    for (auto col : cen_cols) c.push_back(cell_value(col));
    const double y = cell_value(label_col);
    if (y != std::floor(y) || y < 0)
      throw InputError("row " + std::to_string(row_number) + ": label must be a nonnegative integer");
    fed_rows.push_back(std::move(f));
    cen_rows.push_back(std::move(c));
    labels.push_back(static_cast<int>(y));
  }
  if (labels.empty()) throw InputError(path.string() + " has no data rows");

  FeatureSplitDataset ds;
  const auto n = static_cast<Index>(labels.size());
  ds.fed.resize(n, static_cast<Index>(fed_cols.size()));
  ds.cen.resize(n, static_cast<Index>(cen_cols.size()));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < ds.fed.cols(); ++j) ds.fed(i, j) = fed_rows[i][j];
    for (Index j = 0; j < ds.cen.cols(); ++j) ds.cen(i, j) = cen_rows[i][j];
  }
  ds.labels = std::move(labels);
  ds.num_classes = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  ds.validate();
  standardize(ds, train_rows);
  return ds;
}

void write_csv(const FeatureSplitDataset& dataset, const std::filesystem::path& path, const CsvSchema& schema) {
  CsvSchema names = schema;
  if (names.federated.empty() && names.centralized.empty() && names.label.empty()) {
    for (Index j = 0; j < dataset.fed_dim(); ++j) names.federated.push_back("f" + std::to_string(j));
    for (Index j = 0; j < dataset.cen_dim(); ++j) names.centralized.push_back("c" + std::to_string(j));
    names.label = "label";
  }
  if (static_cast<Index>(names.federated.size()) != dataset.fed_dim() ||
      static_cast<Index>(names.centralized.size()) != dataset.cen_dim())
    throw SchemaError("schema column counts do not match the dataset");
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  bool first = true;
  auto emit = [&](const std::string& s) {
    if (!first) out << ',';
    out << s;
    first = false;
  };
  for (const auto& n : names.federated) emit(n);
  for (const auto& n : names.centralized) emit(n);
  emit(names.label);
  out << '\n';
  for (Index i = 0; i < dataset.size(); ++i) {
    first = true;
    for (Index j = 0; j < dataset.fed_dim(); ++j) emit(format_double(dataset.fed(i, j)));
    for (Index j = 0; j < dataset.cen_dim(); ++j) emit(format_double(dataset.cen(i, j)));
    emit(std::to_string(dataset.labels[static_cast<std::size_t>(i)]));
    out << '\n';
  }
}

void standardize(FeatureSplitDataset& dataset, std::span<const SampleId> train_rows) {
  std::vector<SampleId> rows(train_rows.begin(), train_rows.end());
  if (rows.empty()) {
    rows.resize(static_cast<std::size_t>(dataset.size()));
    std::iota(rows.begin(), rows.end(), SampleId{0});
  }
  auto standardize_block = [&](Eigen::MatrixXd& block) {
    for (Index j = 0; j < block.cols(); ++j) {
      double mean = 0;
      for (auto r : rows) mean += block(r, j);
      mean /= static_cast<double>(rows.size());
      double var = 0;
      for (auto r : rows) var += (block(r, j) - mean) * (block(r, j) - mean);
      var /= static_cast<double>(rows.size());
      if (var < 1e-12) {
        block.col(j).setZero();
      } else {
        block.col(j) = (block.col(j).array() - mean) / std::sqrt(var);
      }
    }
  };
  standardize_block(dataset.fed);
  standardize_block(dataset.cen);
}

std::vector<SampleId> DevicePartition::assignment(int device) const {
  std::vector<SampleId> ids = train.at(static_cast<std::size_t>(device));
  const auto& t = test.at(static_cast<std::size_t>(device));
  ids.insert(ids.end(), t.begin(), t.end());
  return ids;
}

std::vector<SampleId> DevicePartition::all_train() const {
  std::vector<SampleId> ids;
  for (const auto& t : train) ids.insert(ids.end(), t.begin(), t.end());
  return ids;
}

void DevicePartition::validate(Index dataset_size) const {
  if (train.size() != test.size() || train.empty()) throw PartitionError("malformed partition");
  std::vector<bool> seen(static_cast<std::size_t>(dataset_size), false);
  for (int k = 0; k < num_devices(); ++k) {
    if (train[k].empty() || test[k].empty())
      throw PartitionError("device " + std::to_string(k) + " lacks a train or test sample");
    for (const auto& list : {train[k], test[k]})
      for (SampleId id : list) {
        if (id < 0 || id >= dataset_size) throw PartitionError("sample id out of range");
        if (seen[static_cast<std::size_t>(id)]) throw PartitionError("sample assigned twice");
        seen[static_cast<std::size_t>(id)] = true;
      }
  }
}

DevicePartition partition_iid(const FeatureSplitDataset& dataset, int devices, std::uint64_t seed,
                              double test_ratio) {
  check_partition_args(dataset, devices, test_ratio);
  Rng rng = make_rng(seed, "partition-iid");
  std::vector<SampleId> order(static_cast<std::size_t>(dataset.size()));
  std::iota(order.begin(), order.end(), SampleId{0});
  std::shuffle(order.begin(), order.end(), rng);

  const auto n = static_cast<std::size_t>(dataset.size());
  const auto k = static_cast<std::size_t>(devices);
  std::vector<std::vector<SampleId>> assigned(k);
  std::size_t pos = 0;
  for (std::size_t d = 0; d < k; ++d) {
    const std::size_t len = n / k + (d < n % k ? 1 : 0);
    assigned[d].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                       order.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return split_devices(std::move(assigned), test_ratio, rng, false);
}

DevicePartition partition_dirichlet(const FeatureSplitDataset& dataset, int devices, double alpha,
                                    std::uint64_t seed, double test_ratio) {
  check_partition_args(dataset, devices, test_ratio);
  if (!(alpha > 0)) throw ConfigError("dirichlet concentration must be positive");
  Rng rng = make_rng(seed, "partition-dirichlet");
  const auto k = static_cast<std::size_t>(devices);

  std::vector<std::vector<SampleId>> by_class(static_cast<std::size_t>(dataset.num_classes));
  for (Index i = 0; i < dataset.size(); ++i) by_class[dataset.labels[static_cast<std::size_t>(i)]].push_back(i);

  constexpr int kMaxAttempts = 100;
  std::gamma_distribution<double> gamma(alpha, 1.0);
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<std::vector<SampleId>> assigned(k);
    for (const auto& ids : by_class) {
      if (ids.empty()) continue;
      std::vector<double> p(k);
      double total = 0;
      do {
        total = 0;
        for (auto& v : p) total += (v = gamma(rng));
      } while (!(total > 0));
      std::discrete_distribution<std::size_t> pick(p.begin(), p.end());
      for (SampleId id : ids) assigned[pick(rng)].push_back(id);
    }
    const bool ok = std::all_of(assigned.begin(), assigned.end(), [](const auto& v) { return v.size() >= 2; });
    if (ok) return split_devices(std::move(assigned), test_ratio, rng, true);
  }
  throw PartitionError("dirichlet partition left a device without train/test samples after " +
                       std::to_string(kMaxAttempts) + " attempts");
}

const char* to_string(FeatureSetting s) {
  switch (s) {
    case FeatureSetting::kF: return "F";
    case FeatureSetting::kC2F: return "C2F";
    case FeatureSetting::kCandF: return "CandF";
  }
  return "?";
}

FeatureSetting feature_setting_from_string(const std::string& s) {
  if (s == "F") return FeatureSetting::kF;
  if (s == "C2F") return FeatureSetting::kC2F;
  if (s == "CandF" || s == "C&F") return FeatureSetting::kCandF;
  throw ConfigError("unknown feature setting '" + s + "'");
}

FeatureView::FeatureView(const FeatureSplitDataset& dataset, FeatureSetting setting)
    : data_(&dataset), setting_(setting) {}

Index FeatureView::device_dim() const {
  return setting_ == FeatureSetting::kC2F ? data_->fed_dim() + data_->cen_dim() : data_->fed_dim();
}

Index FeatureView::cloud_dim() const { return setting_ == FeatureSetting::kCandF ? data_->cen_dim() : 0; }

Eigen::VectorXd FeatureView::device_features(SampleId id) const {
  const SampleId ids[] = {id};
  return device_rows(ids).row(0).transpose();
}

Eigen::VectorXd FeatureView::cloud_features(SampleId id) const {
  const SampleId ids[] = {id};
  return cloud_rows(ids).row(0).transpose();
}

Eigen::MatrixXd FeatureView::device_rows(std::span<const SampleId> ids) const {
  Eigen::MatrixXd out(static_cast<Index>(ids.size()), device_dim());
  const Index df = data_->fed_dim();
  for (Index r = 0; r < out.rows(); ++r) {
    const SampleId id = ids[static_cast<std::size_t>(r)];
    out.row(r).head(df) = data_->fed.row(id);
    if (setting_ == FeatureSetting::kC2F) out.row(r).tail(data_->cen_dim()) = data_->cen.row(id);
  }
  return out;
}

Eigen::MatrixXd FeatureView::cloud_rows(std::span<const SampleId> ids) const {
  Eigen::MatrixXd out(static_cast<Index>(ids.size()), cloud_dim());
  if (cloud_dim() == 0) return out;
  for (Index r = 0; r < out.rows(); ++r) out.row(r) = data_->cen.row(ids[static_cast<std::size_t>(r)]);
  return out;
}

std::vector<Index> label_histogram(const FeatureSplitDataset& dataset, std::span<const SampleId> ids) {
  std::vector<Index> h(static_cast<std::size_t>(dataset.num_classes), 0);
  for (SampleId id : ids) ++h[static_cast<std::size_t>(dataset.labels[static_cast<std::size_t>(id)])];
  return h;
}

}  // namespace ecct::data
