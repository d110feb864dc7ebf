// Copyright 2026 The ECCT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecct/state.hpp"

#include <algorithm>
#include <bit>

namespace ecct {

std::vector<SampleId> ParticipantState::local_ids() const {
  std::vector<SampleId> ids = train_ids;
  ids.insert(ids.end(), test_ids.begin(), test_ids.end());
  return ids;
}

std::vector<Eigen::Index> edge_encoder_widths(const TrainingConfig& cfg, int device) {
  if (!cfg.model.hetero) return cfg.model.edge_encoder;
  Rng rng = make_rng(cfg.seed, "hetero-arch", static_cast<std::uint64_t>(device));
  std::uniform_int_distribution<std::size_t> pick(0, cfg.model.hetero_widths.size() - 1);
  std::vector<Eigen::Index> widths;
  for (std::size_t i = 0; i < std::max<std::size_t>(cfg.model.edge_encoder.size(), 1); ++i)
    widths.push_back(cfg.model.hetero_widths[pick(rng)]);
  return widths;
}

EdgeModel make_edge_model(const TrainingConfig& cfg, const Environment& env, int device) {
  const auto d_e = cfg.model.embedding_dim;
  const auto classes = static_cast<Eigen::Index>(env.dataset->num_classes);
  const Eigen::Index classifier_in = cfg.method == Method::kEcct ? 2 * d_e : d_e;
  EdgeModel m{nn::DenseNetd::mlp(env.view.device_dim(), edge_encoder_widths(cfg, device), d_e),
              nn::DenseNetd::mlp(classifier_in, cfg.model.edge_classifier, classes)};
  Rng rng = make_rng(cfg.seed, "device-init", static_cast<std::uint64_t>(device));
  m.encoder.initialize(rng);
  m.classifier.initialize(rng);
  return m;
}

ParticipantState make_participant(const TrainingConfig& cfg, const Environment& env, int device) {
  ParticipantState p;
  const auto k = static_cast<std::size_t>(device);
  p.device_id = device;
  p.model = make_edge_model(cfg, env, device);
  p.encoder_opt = nn::Optimizerd(cfg.optimizer);
  p.classifier_opt = nn::Optimizerd(cfg.optimizer);
  p.train_ids = env.partition.train.at(k);
  p.test_ids = env.partition.test.at(k);
  const Eigen::Index store_dim = cfg.method == Method::kEcct ? cfg.model.embedding_dim : 0;
  p.store = transfer::KnowledgeStore(transfer::Direction::kCloudToEdge, store_dim);
  p.buffer = transfer::KnowledgeBuffer(std::min(cfg.transfer.edge_buffer_capacity, p.train_ids.size() + p.test_ids.size()));
  p.batch_rng = make_rng(cfg.seed, "device-batches", k);
  p.async_rng = make_rng(cfg.seed, "device-async", k);
  p.privacy_rng = make_rng(cfg.seed, "device-privacy", k);
  std::uniform_int_distribution<std::size_t> pick(0, cfg.async.version_periods.size() - 1);
  p.version_period = cfg.async.version_periods[pick(p.async_rng)];
  return p;
}

CloudState make_cloud(const TrainingConfig& cfg, const Environment& env) {
  CloudState c;
  const auto d_e = cfg.model.embedding_dim;
  const auto classes = static_cast<Eigen::Index>(env.dataset->num_classes);
  Rng rng = make_rng(cfg.seed, "cloud-init");
  if (cfg.method == Method::kEcct && env.view.cloud_dim() > 0) {
    c.active = true;
    c.encoder = nn::DenseNetd::mlp(env.view.cloud_dim(), cfg.model.cloud_encoder, d_e);
    c.encoder->initialize(rng);
    c.classifier = nn::DenseNetd::mlp(2 * d_e, cfg.model.cloud_classifier, classes);
  } else if (cfg.method == Method::kFedGkt) {
    c.active = true;
    c.classifier = nn::DenseNetd::mlp(d_e, cfg.model.cloud_classifier, classes);
  }
  if (c.active) c.classifier.initialize(rng);
  c.encoder_opt = nn::Optimizerd(cfg.optimizer);
  c.classifier_opt = nn::Optimizerd(cfg.optimizer);
  const int k_devices = env.partition.num_devices();
  for (int k = 0; k < k_devices; ++k) {
    const auto n_local = env.partition.train[k].size() + env.partition.test[k].size();
    c.stores.emplace_back(transfer::Direction::kEdgeToCloud, d_e);
    c.buffers.emplace_back(std::min(cfg.transfer.cloud_buffer_capacity, n_local));
  }
  c.outbox.resize(static_cast<std::size_t>(k_devices));
  c.batch_rng = make_rng(cfg.seed, "cloud-batches");
  return c;
}

std::uint64_t parameter_checksum(const nn::DenseNetd& net) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const nn::VectorXd flat = net.serialize_params();
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(flat(i));
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffULL;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace ecct
