// Copyright 2026 The ECCT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecct/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ecct/errors.hpp"
#include "ecct/fusion.hpp"
#include "ecct/losses.hpp"

namespace ecct::eval {
namespace {

void check_sizes(std::size_t a, std::size_t b) {
  if (a != b) throw ShapeError("scores and labels differ in length");
  if (a == 0) throw InputError("metric of an empty sample");
}

Eigen::MatrixXd probabilities(const Eigen::MatrixXd& logits) { return loss::softmax_rows<double>(logits, 1.0); }

SideMetrics score(const Inference& inf, std::span<const int> labels, int classes) {
  SideMetrics m;
  m.zero_filled = inf.zero_filled;
  for (Index i = 0; i < inf.probabilities.rows(); ++i)
    if (loss::argmax_row(inf.probabilities.row(i)) == labels[static_cast<std::size_t>(i)]) ++m.correct;
  m.accuracy = static_cast<double>(m.correct) / static_cast<double>(labels.size());
  if (classes == 2) {
    const Eigen::VectorXd pos = inf.probabilities.col(1);
    const std::span<const double> s(pos.data(), static_cast<std::size_t>(pos.size()));
    m.auc = auc(s, labels);
    m.mse = mse(s, labels);
  }
  return m;
}

nlohmann::json side_json(const SideMetrics& s) {
  return {{"accuracy", s.accuracy},
          {"auc", s.auc},
          {"mse", s.mse},
          {"correct", s.correct},
          {"zero_filled", s.zero_filled}};
}

double num(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return kUndefined;
  return j[key].get<double>();
}

SideMetrics side_from_json(const nlohmann::json& j) {
  SideMetrics s;
  s.accuracy = num(j, "accuracy");
  s.auc = num(j, "auc");
  s.mse = num(j, "mse");
  s.correct = j.value("correct", Index{0});
  s.zero_filled = j.value("zero_filled", Index{0});
  return s;
}

}  // namespace

double accuracy(const Eigen::MatrixXd& scores, std::span<const int> labels) {
  check_sizes(static_cast<std::size_t>(scores.rows()), labels.size());
  Index correct = 0;
  for (Index i = 0; i < scores.rows(); ++i)
    if (loss::argmax_row(scores.row(i)) == labels[static_cast<std::size_t>(i)]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double binary_accuracy(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_sizes(scores.size(), labels.size());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) correct += ((scores[i] >= threshold ? 1 : 0) == labels[i]);
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores.size(), labels.size());
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) {
      if (labels[order[t]] == 1) {
        positive_rank_sum += avg_rank;
        ++positives;
      }
    }
    i = j + 1;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return kUndefined;
  const double np = static_cast<double>(positives);
  return (positive_rank_sum - np * (np + 1) / 2) / (np * static_cast<double>(negatives));
}

double mse(std::span<const double> probabilities, std::span<const int> labels) {
  check_sizes(probabilities.size(), labels.size());
  double total = 0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const double d = probabilities[i] - (labels[i] == 1 ? 1.0 : 0.0);
    total += d * d;
  }
  return total / static_cast<double>(probabilities.size());
}

Inference infer_edge(const EdgeModel& model, const transfer::KnowledgeStore* store, const data::FeatureView& view,
                     std::span<const SampleId> ids) {
  Inference out;
  const Eigen::MatrixXd h_d = model.encoder.predict(view.device_rows(ids));
  if (!model.fuses()) {
    out.probabilities = probabilities(model.classifier.predict(h_d));
    return out;
  }
  if (store == nullptr) throw StateError("fusing edge model needs a knowledge store");
  std::vector<bool> missing;
  const Eigen::MatrixXd h_s = store->gather_embeddings(ids, missing);
  const FusedBatch fused = fuse(h_d, h_s, nullptr, &missing);
  out.zero_filled = fused.zero_filled;
  out.probabilities = probabilities(model.classifier.predict(fused.fused));
  return out;
}

Inference infer_cloud(const CloudState& cloud, int device, const data::FeatureView& view,
                      std::span<const SampleId> ids) {
  if (!cloud.active) throw StateError("cloud-based inference needs an active cloud model");
  Inference out;
  std::vector<bool> missing;
  const auto& store = cloud.stores.at(static_cast<std::size_t>(device));
  const Eigen::MatrixXd h_d = store.gather_embeddings(ids, missing);
  if (!cloud.encoder) {
    out.zero_filled = std::count(missing.begin(), missing.end(), true);
    out.probabilities = probabilities(cloud.classifier.predict(h_d));
    return out;
  }
  const Eigen::MatrixXd h_s = cloud.encoder->predict(view.cloud_rows(ids));
  const FusedBatch fused = fuse(h_d, h_s, &missing, nullptr);
  out.zero_filled = fused.zero_filled;
  out.probabilities = probabilities(cloud.classifier.predict(fused.fused));
  return out;
}

RoundReport evaluate(int round, const std::vector<ParticipantState>& participants, const CloudState* cloud,
                     const Environment& env, const EdgeModel* global_model) {
  RoundReport r;
  r.round = round;
  const int classes = env.dataset->num_classes;
  const bool with_cloud = cloud != nullptr && cloud->active;
  std::vector<double> edge_pos, cloud_pos;
  std::vector<int> pooled_labels;
  Index total = 0, edge_correct = 0, cloud_correct = 0;
  for (const auto& p : participants) {
    DeviceMetrics m;
    m.device = p.device_id;
    m.version = p.model_version;
    m.test_samples = static_cast<Index>(p.test_ids.size());
    std::vector<int> labels;
    for (SampleId id : p.test_ids) labels.push_back(env.dataset->labels[static_cast<std::size_t>(id)]);
    const Inference edge = global_model ? infer_edge(*global_model, nullptr, env.view, p.test_ids)
                                        : infer_edge(p, env.view, p.test_ids);
    m.edge = score(edge, labels, classes);
    if (with_cloud) {
      const Inference cl = infer_cloud(*cloud, p.device_id, env.view, p.test_ids);
      m.cloud = score(cl, labels, classes);
      cloud_correct += m.cloud.correct;
      if (classes == 2)
        for (Index i = 0; i < cl.probabilities.rows(); ++i) cloud_pos.push_back(cl.probabilities(i, 1));
    }
    if (classes == 2)
      for (Index i = 0; i < edge.probabilities.rows(); ++i) edge_pos.push_back(edge.probabilities(i, 1));
    pooled_labels.insert(pooled_labels.end(), labels.begin(), labels.end());
    total += m.test_samples;
    edge_correct += m.edge.correct;
    r.zero_filled += m.edge.zero_filled + m.cloud.zero_filled;
    r.devices.push_back(m);
  }
  if (r.devices.empty()) return r;

  const double k = static_cast<double>(r.devices.size());
  double sum = 0, sq = 0, cloud_sum = 0;
  for (const auto& m : r.devices) {
    sum += m.edge.accuracy;
    sq += m.edge.accuracy * m.edge.accuracy;
    cloud_sum += m.cloud.accuracy;
  }
  r.edge_accuracy_mean = sum / k;
  r.edge_accuracy_std = std::sqrt(std::max(0.0, sq / k - r.edge_accuracy_mean * r.edge_accuracy_mean));
  r.edge_accuracy_pooled = static_cast<double>(edge_correct) / static_cast<double>(total);
  if (with_cloud) {
    r.cloud_accuracy_mean = cloud_sum / k;
    r.cloud_accuracy_pooled = static_cast<double>(cloud_correct) / static_cast<double>(total);
  }
  if (classes == 2) {
    r.edge_auc_pooled = auc(edge_pos, pooled_labels);
    r.edge_mse_pooled = mse(edge_pos, pooled_labels);
    if (with_cloud) {
      r.cloud_auc_pooled = auc(cloud_pos, pooled_labels);
      r.cloud_mse_pooled = mse(cloud_pos, pooled_labels);
    }
  }
  return r;
}

nlohmann::json to_json(const RoundReport& r) {
  nlohmann::json devices = nlohmann::json::array();
  for (const auto& m : r.devices) {
    devices.push_back({{"device", m.device},
                       {"test_samples", m.test_samples},
                       {"edge", side_json(m.edge)},
                       {"cloud", side_json(m.cloud)},
                       {"trained", m.trained},
                       {"epochs", m.epochs},
                       {"loss", m.loss},
                       {"version", m.version}});
  }
  return {{"round", r.round},
          {"devices", devices},
          {"edge_accuracy_mean", r.edge_accuracy_mean},
          {"edge_accuracy_std", r.edge_accuracy_std},
          {"edge_accuracy_pooled", r.edge_accuracy_pooled},
          {"cloud_accuracy_mean", r.cloud_accuracy_mean},
          {"cloud_accuracy_pooled", r.cloud_accuracy_pooled},
          {"edge_auc_pooled", r.edge_auc_pooled},
          {"edge_mse_pooled", r.edge_mse_pooled},
          {"cloud_auc_pooled", r.cloud_auc_pooled},
          {"cloud_mse_pooled", r.cloud_mse_pooled},
          {"device_loss_mean", r.device_loss_mean},
          {"cloud_loss", r.cloud_loss},
          {"cloud_skipped", r.cloud_skipped},
          {"devices_trained", r.devices_trained},
          {"packets_up", r.packets_up},
          {"packets_down", r.packets_down},
          {"rows_up", r.rows_up},
          {"rows_down", r.rows_down},
          {"bytes_up", r.bytes_up},
          {"bytes_down", r.bytes_down},
          {"staleness_edge", r.staleness_edge},
          {"staleness_cloud", r.staleness_cloud},
          {"zero_filled", r.zero_filled},
          {"teacher_missing", r.teacher_missing},
          {"join_errors", r.join_errors}};
}

RoundReport report_from_json(const nlohmann::json& j) {
  RoundReport r;
  r.round = j.at("round").get<int>();
  for (const auto& d : j.at("devices")) {
    DeviceMetrics m;
    m.device = d.at("device").get<int>();
    m.test_samples = d.value("test_samples", Index{0});
    m.edge = side_from_json(d.at("edge"));
    m.cloud = side_from_json(d.at("cloud"));
    m.trained = d.value("trained", false);
    m.epochs = d.value("epochs", 0);
    m.loss = num(d, "loss");
    m.version = d.value("version", std::uint64_t{0});
    r.devices.push_back(m);
  }
  r.edge_accuracy_mean = num(j, "edge_accuracy_mean");
  r.edge_accuracy_std = num(j, "edge_accuracy_std");
  r.edge_accuracy_pooled = num(j, "edge_accuracy_pooled");
  r.cloud_accuracy_mean = num(j, "cloud_accuracy_mean");
  r.cloud_accuracy_pooled = num(j, "cloud_accuracy_pooled");
  r.edge_auc_pooled = num(j, "edge_auc_pooled");
  r.edge_mse_pooled = num(j, "edge_mse_pooled");
  r.cloud_auc_pooled = num(j, "cloud_auc_pooled");
  r.cloud_mse_pooled = num(j, "cloud_mse_pooled");
  r.device_loss_mean = num(j, "device_loss_mean");
  r.cloud_loss = num(j, "cloud_loss");
  r.cloud_skipped = j.value("cloud_skipped", false);
  r.devices_trained = j.value("devices_trained", 0);
  r.packets_up = j.value("packets_up", Index{0});
  r.packets_down = j.value("packets_down", Index{0});
  r.rows_up = j.value("rows_up", Index{0});
  r.rows_down = j.value("rows_down", Index{0});
  r.bytes_up = j.value("bytes_up", Index{0});
  r.bytes_down = j.value("bytes_down", Index{0});
  r.staleness_edge = num(j, "staleness_edge");
  r.staleness_cloud = num(j, "staleness_cloud");
  r.zero_filled = j.value("zero_filled", Index{0});
  r.teacher_missing = j.value("teacher_missing", Index{0});
  r.join_errors = j.value("join_errors", Index{0});
  return r;
}

}  // namespace ecct::eval
