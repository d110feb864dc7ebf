// Copyright 2026 The ECCT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecct/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include "ecct/checkpoint.hpp"
#include "ecct/errors.hpp"
#include "ecct/fusion.hpp"
#include "ecct/losses.hpp"

namespace ecct {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using transfer::Direction;
using transfer::KnowledgePacket;
using transfer::Stage;

Stage stage_at(const TrainingConfig& cfg, int round) {
  return round < cfg.loss.two_stage_switch_round ? Stage::kEmbeddingOnly : Stage::kFull;
}

MatrixXd gather_rows(const MatrixXd& m, std::span<const Index> rows) {
  MatrixXd out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& v, std::span<const Index> rows) {
  std::vector<T> out;
  out.reserve(rows.size());
  for (Index r : rows) out.push_back(v[static_cast<std::size_t>(r)]);
  return out;
}

std::vector<bool> gather_mask(const std::vector<bool>& v, std::span<const Index> rows) {
  std::vector<bool> out;
  out.reserve(rows.size());
  for (Index r : rows) out.push_back(v[static_cast<std::size_t>(r)]);
  return out;
}

void run_parallel(std::vector<std::function<void()>>& tasks, bool parallel) {
  if (!parallel || tasks.size() < 2) {
    for (auto& t : tasks) t();
    return;
  }
  const unsigned workers = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(),
                                                           static_cast<unsigned>(tasks.size())));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(tasks.size());
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < tasks.size(); i = next++) {
        try {
          tasks[i]();
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

data::FeatureSplitDataset build_dataset(const TrainingConfig& cfg) {
  if (cfg.data.source == DataSource::kCsv) return data::load_csv(cfg.data.csv_path, cfg.data.csv_schema);
  data::SyntheticSpec spec;
  spec.classes = cfg.data.classes;
  spec.samples = cfg.data.samples;
  spec.fed_dim = cfg.data.fed_dim;
  spec.cen_dim = cfg.data.cen_dim;
  spec.separation = cfg.data.separation;
  spec.seed = derive_seed(cfg.seed, "synthetic");
  return data::generate_synthetic(spec);
}

data::DevicePartition build_partition(const TrainingConfig& cfg, const data::FeatureSplitDataset& dataset) {
  if (cfg.data.partition == PartitionKind::kDirichlet)
    return data::partition_dirichlet(dataset, cfg.devices, cfg.data.dirichlet_alpha,
                                     derive_seed(cfg.seed, "partition-dirichlet"), cfg.data.test_ratio);
  return data::partition_iid(dataset, cfg.devices, derive_seed(cfg.seed, "partition-iid"), cfg.data.test_ratio);
}

std::vector<int> select_devices(int devices, int count, Rng& rng) {
  if (count < 1 || count > devices) throw ConfigError("cannot select " + std::to_string(count) + " devices");
  std::vector<int> all(static_cast<std::size_t>(devices));
  std::iota(all.begin(), all.end(), 0);
  if (count == devices) return all;
  // partial Fisher-Yates
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<int> pick(i, devices - 1);
    std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(pick(rng))]);
  }
  all.resize(static_cast<std::size_t>(count));
  std::sort(all.begin(), all.end());
  return all;
}

AsyncDecision apply_async_mode(const TrainingConfig& cfg, ParticipantState& p) {
  AsyncDecision d;
  const int base = cfg.device_epochs_for(p.device_id);
  d.epochs = base;
  const bool vary_epochs = cfg.async_mode == AsyncMode::kAsynEpoch || cfg.async_mode == AsyncMode::kAsynBoth;
  const bool vary_version = cfg.async_mode == AsyncMode::kAsynVersion || cfg.async_mode == AsyncMode::kAsynBoth;
  if (vary_epochs) {
    std::uniform_int_distribution<int> draw(1, 2 * base - 1);
    d.epochs = draw(p.async_rng);
  }
  if (vary_version) d.communicates = (p.model_version + 1) % static_cast<std::uint64_t>(p.version_period) == 0;
  return d;
}

EdgeRoundStats edge_train_round(ParticipantState& p, const Environment& env, int round, int epochs,
                                bool emit_knowledge) {
  const TrainingConfig& cfg = *env.cfg;
  if (p.train_ids.empty()) throw StateError("device " + std::to_string(p.device_id) + " has no training data");
  EdgeRoundStats stats;
  stats.epochs = epochs;
  const Index classes = env.dataset->num_classes;
  const Index d_e = p.model.encoder.output_dim();
  const bool fuses = p.model.fuses();

  const MatrixXd x = env.view.device_rows(p.train_ids);
  std::vector<int> labels;
  labels.reserve(p.train_ids.size());
  for (SampleId id : p.train_ids) labels.push_back(env.dataset->labels[static_cast<std::size_t>(id)]);

  // Cloud knowledge is frozen for the whole round.
  std::vector<bool> hs_missing;
  MatrixXd h_s;
  if (fuses) h_s = p.store.gather_embeddings(p.train_ids, hs_missing);
  MatrixXd teacher;
  std::vector<bool> teacher_available;
  const bool any_teacher = p.store.gather_logits(p.train_ids, classes, teacher, teacher_available);

  const auto n = static_cast<Index>(p.train_ids.size());
  std::vector<Index> order(static_cast<std::size_t>(n));
  double loss_sum = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), p.batch_rng);
    for (Index start = 0; start < n; start += cfg.batch_size) {
      const Index len = std::min(cfg.batch_size, n - start);
      const std::span<const Index> rows(order.data() + start, static_cast<std::size_t>(len));
      const std::vector<int> yb = gather(labels, rows);

      const MatrixXd h_d = p.model.encoder.forward(gather_rows(x, rows));
      MatrixXd z;
      if (fuses) {
        const std::vector<bool> miss = gather_mask(hs_missing, rows);
        const FusedBatch fb = fuse(h_d, gather_rows(h_s, rows), nullptr, &miss);
        stats.zero_filled += fb.zero_filled;
        z = p.model.classifier.forward(fb.fused);
      } else {
        z = p.model.classifier.forward(h_d);
      }

      std::optional<loss::TeacherLogits<double>> tb;
      if (any_teacher) {
        std::vector<bool> avail = gather_mask(teacher_available, rows);
        if (std::find(avail.begin(), avail.end(), true) != avail.end())
          tb = loss::TeacherLogits<double>{gather_rows(teacher, rows), std::move(avail)};
      }
      const auto obj = loss::device_loss<double>(z, tb ? &*tb : nullptr, yb, cfg.loss, round);
      if (!tb && stage_at(cfg, round) == Stage::kFull && cfg.loss.alpha_d > 0) ++stats.teacher_missing;

      const auto cb = p.model.classifier.backward(obj.grad);
      // The stored server half of the fused input is a constant.
      const MatrixXd upstream = fuses ? MatrixXd(cb.input_gradient.leftCols(d_e)) : cb.input_gradient;
      const auto eb = p.model.encoder.backward(upstream);
      p.classifier_opt.step(p.model.classifier, cb.grads);
      p.encoder_opt.step(p.model.encoder, eb.grads);
      loss_sum += obj.value;
      ++stats.batches;
    }
  }
  stats.loss = stats.batches ? loss_sum / static_cast<double>(stats.batches) : 0.0;
  ++p.model_version;
  if (!emit_knowledge) return stats;

  const std::vector<SampleId> local = p.local_ids();
  transfer::PacketHeader header;
  header.producer = p.device_id;
  header.recipient = transfer::kCloud;
  header.direction = Direction::kEdgeToCloud;
  header.sample_ids = local;
  header.labels = labels;
  header.labels.resize(local.size(), transfer::kNoLabel);
  header.version = p.model_version;
  header.round = round;
  transfer::PacketModel pm{&p.model.encoder, &p.model.classifier,
                           fuses ? transfer::PacketModel::Fusion::kOwnFirst : transfer::PacketModel::Fusion::kNone};
  MatrixXd partner;
  if (fuses) {
    std::vector<bool> miss;
    partner = p.store.gather_embeddings(local, miss);
  }
  KnowledgePacket fragment = transfer::produce_packet(pm, env.view.device_rows(local), partner, std::move(header),
                                                      stage_at(cfg, round));
  if (cfg.privacy.enabled)
    fragment.embeddings =
        transfer::privatize(fragment.embeddings, cfg.privacy.clip_norm, cfg.privacy.noise_sigma, p.privacy_rng);
  for (auto& packet : p.buffer.push_all(fragment)) p.outbox.push_back(std::move(packet));
  stats.fragments = local.size();
  return stats;
}

CloudRoundStats cloud_train_round(CloudState& c, const Environment& env, int round, std::span<const int> recipients) {
  const TrainingConfig& cfg = *env.cfg;
  CloudRoundStats stats;
  if (!c.active) {
    stats.skipped = true;
    return stats;
  }
  const Index classes = env.dataset->num_classes;
  const Index n_data = env.dataset->size();

  // Training table: labeled edge knowledge in (device, id) order.
  std::vector<int> row_device;
  std::vector<SampleId> row_id;
  std::vector<int> row_label;
  std::vector<const transfer::KnowledgeStore::Entry*> row_entry;
  for (std::size_t k = 0; k < c.stores.size(); ++k) {
    for (SampleId id : c.stores[k].ids()) {
      const auto* e = c.stores[k].find(id);
      if (e->label == transfer::kNoLabel) continue;
      if (id < 0 || id >= n_data) {
        ++stats.join_errors;
        continue;
      }
      row_device.push_back(static_cast<int>(k));
      row_id.push_back(id);
      row_label.push_back(e->label);
      row_entry.push_back(e);
    }
  }
  const auto n = static_cast<Index>(row_id.size());
  if (n == 0) {
    stats.skipped = true;
    return stats;
  }
  stats.rows = n;

  const Index d_in = row_entry.front()->embedding.size();
  MatrixXd h_d(n, d_in);
  MatrixXd teacher = MatrixXd::Zero(n, classes);
  std::vector<bool> has_teacher(static_cast<std::size_t>(n), false);
  for (Index i = 0; i < n; ++i) {
    const auto* e = row_entry[static_cast<std::size_t>(i)];
    h_d.row(i) = e->embedding.transpose();
    if (e->logits) {
      teacher.row(i) = e->logits->transpose();
      has_teacher[static_cast<std::size_t>(i)] = true;
    }
  }
  MatrixXd x_cen;
  if (c.encoder) x_cen = env.view.cloud_rows(row_id);

  std::vector<Index> order(static_cast<std::size_t>(n));
  double loss_sum = 0;
  for (int epoch = 0; epoch < cfg.cloud_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), c.batch_rng);
    for (Index start = 0; start < n; start += cfg.batch_size) {
      const Index len = std::min(cfg.batch_size, n - start);
      std::vector<Index> rows(order.begin() + start, order.begin() + start + len);
      std::stable_sort(rows.begin(), rows.end(), [&](Index a, Index b) {
        return row_device[static_cast<std::size_t>(a)] < row_device[static_cast<std::size_t>(b)];
      });

      const MatrixXd hd_b = gather_rows(h_d, rows);
      MatrixXd z;
      Index d_e = 0;
      if (c.encoder) {
        const MatrixXd h_s = c.encoder->forward(gather_rows(x_cen, rows));
        d_e = h_s.cols();
        z = c.classifier.forward(fuse(hd_b, h_s).fused);
      } else {
        z = c.classifier.forward(hd_b);
      }

      std::vector<MatrixXd> blocks;
      std::vector<std::vector<int>> block_labels;
      std::vector<loss::TeacherLogits<double>> teachers;
      std::vector<bool> block_has_teacher;
      std::vector<Index> block_start;
      for (Index i = 0; i < len;) {
        Index j = i;
        const int dev = row_device[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])];
        while (j < len && row_device[static_cast<std::size_t>(rows[static_cast<std::size_t>(j)])] == dev) ++j;
        const std::span<const Index> br(rows.data() + i, static_cast<std::size_t>(j - i));
        block_start.push_back(i);
        blocks.push_back(z.middleRows(i, j - i));
        block_labels.push_back(gather(row_label, br));
        std::vector<bool> avail = gather_mask(has_teacher, br);
        block_has_teacher.push_back(std::find(avail.begin(), avail.end(), true) != avail.end());
        teachers.push_back({gather_rows(teacher, br), std::move(avail)});
        i = j;
      }
      std::vector<const loss::TeacherLogits<double>*> teacher_ptrs;
      for (std::size_t b = 0; b < blocks.size(); ++b)
        teacher_ptrs.push_back(block_has_teacher[b] ? &teachers[b] : nullptr);
      const auto obj = loss::server_loss<double>(blocks, teacher_ptrs, block_labels, cfg.loss, round);
      MatrixXd grad(len, classes);
      for (std::size_t b = 0; b < blocks.size(); ++b) grad.middleRows(block_start[b], blocks[b].rows()) = obj.grads[b];

      const auto cb = c.classifier.backward(grad);
      if (c.encoder) {
        // Only the cloud half of the fused input belongs to the cloud encoder.
        const auto eb = c.encoder->backward(cb.input_gradient.rightCols(d_e));
        c.classifier_opt.step(c.classifier, cb.grads);
        c.encoder_opt.step(*c.encoder, eb.grads);
      } else {
        c.classifier_opt.step(c.classifier, cb.grads);
      }
      loss_sum += obj.value;
      ++stats.batches;
    }
  }
  stats.loss = loss_sum / static_cast<double>(stats.batches);
  ++c.model_version;

  const Stage stage = stage_at(cfg, round);
  for (int k : recipients) {
    const auto& store = c.stores.at(static_cast<std::size_t>(k));
    if (store.size() == 0) continue;
    // Logit-only downlink has nothing to send before the switch round.
    if (!c.encoder && stage == Stage::kEmbeddingOnly) continue;
    transfer::PacketHeader header;
    header.producer = transfer::kCloud;
    header.recipient = k;
    header.direction = Direction::kCloudToEdge;
    header.sample_ids = store.ids();
    header.version = c.model_version;
    header.round = round;
    std::vector<bool> miss;
    const MatrixXd stored_h_d = store.gather_embeddings(header.sample_ids, miss);
    KnowledgePacket fragment;
    if (c.encoder) {
      const MatrixXd features = env.view.cloud_rows(header.sample_ids);
      transfer::PacketModel pm{&*c.encoder, &c.classifier, transfer::PacketModel::Fusion::kPartnerFirst};
      fragment = transfer::produce_packet(pm, features, stored_h_d, std::move(header), stage);
    } else {
      transfer::PacketModel pm{nullptr, &c.classifier, transfer::PacketModel::Fusion::kNone};
      fragment = transfer::produce_packet(pm, stored_h_d, MatrixXd(), std::move(header), stage);
    }
    auto& outbox = c.outbox.at(static_cast<std::size_t>(k));
    for (auto& packet : c.buffers.at(static_cast<std::size_t>(k)).push_all(fragment)) outbox.push_back(std::move(packet));
  }
  return stats;
}

void fedavg_aggregate(EdgeModel& global, const std::vector<const EdgeModel*>& uploaders,
                      const std::vector<double>& sample_counts) {
  if (uploaders.empty()) return;
  if (uploaders.size() != sample_counts.size()) throw ShapeError("one sample count per uploader is required");
  const double total = std::accumulate(sample_counts.begin(), sample_counts.end(), 0.0);
  if (!(total > 0)) throw InputError("fedavg needs a positive sample count");
  for (const EdgeModel* m : uploaders)
    if (!m->encoder.same_architecture(global.encoder) || !m->classifier.same_architecture(global.classifier))
      throw ConfigError("fedavg requires identical architectures");
  auto average = [&](auto member) {
    nn::VectorXd acc;
    for (std::size_t i = 0; i < uploaders.size(); ++i) {
      const double w = sample_counts[i] / total;
      const nn::VectorXd p = (uploaders[i]->*member).serialize_params();
      if (i == 0) {
        acc = w * p;
      } else {
        acc += w * p;
      }
    }
    return acc;
  };
  const nn::VectorXd enc = average(&EdgeModel::encoder);
  const nn::VectorXd cls = average(&EdgeModel::classifier);
  global.encoder.deserialize_params(std::span<const double>(enc.data(), static_cast<std::size_t>(enc.size())));
  global.classifier.deserialize_params(std::span<const double>(cls.data(), static_cast<std::size_t>(cls.size())));
}

Simulation::Simulation(TrainingConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  dataset_ = std::make_unique<data::FeatureSplitDataset>(build_dataset(cfg_));
  data::DevicePartition part = build_partition(cfg_, *dataset_);
  if (cfg_.data.source == DataSource::kCsv) {
    const auto train = part.all_train();
    data::standardize(*dataset_, train);
  }
  env_ = std::make_unique<Environment>(cfg_, *dataset_, std::move(part));
  init();
}

Simulation::Simulation(TrainingConfig cfg, data::FeatureSplitDataset dataset, data::DevicePartition partition)
    : cfg_(std::move(cfg)) {
  cfg_.validate();
  dataset.validate();
  dataset_ = std::make_unique<data::FeatureSplitDataset>(std::move(dataset));
  if (partition.num_devices() != cfg_.devices) throw ConfigError("partition does not match the device count");
  partition.validate(dataset_->size());
  env_ = std::make_unique<Environment>(cfg_, *dataset_, std::move(partition));
  init();
}

void Simulation::init() {
  participants_.clear();
  for (int k = 0; k < cfg_.devices; ++k) participants_.push_back(make_participant(cfg_, *env_, k));
  cloud_ = make_cloud(cfg_, *env_);
  if (cfg_.method == Method::kFedAvg) global_ = make_edge_model(cfg_, *env_, 0);
  select_rng_ = make_rng(cfg_.seed, "select");
}

eval::RoundReport Simulation::evaluate(int round) const {
  eval::RoundReport r = eval::evaluate(round, participants_, &cloud_, *env_, global_ ? &*global_ : nullptr);
  double edge_lag = 0, cloud_lag = 0;
  int edge_n = 0, cloud_n = 0;
  for (const auto& p : participants_) {
    if (p.store.size() > 0) {
      edge_lag += p.store.mean_version_lag(cloud_.model_version);
      ++edge_n;
    }
    const auto& s = cloud_.stores[static_cast<std::size_t>(p.device_id)];
    if (s.size() > 0) {
      cloud_lag += s.mean_version_lag(p.model_version);
      ++cloud_n;
    }
  }
  r.staleness_edge = edge_n ? edge_lag / edge_n : 0.0;
  r.staleness_cloud = cloud_n ? cloud_lag / cloud_n : 0.0;
  return r;
}

eval::RoundReport Simulation::initial_report() const { return evaluate(-1); }

eval::RoundReport Simulation::step() {
  if (finished()) throw StateError("simulation already ran every round");
  const std::vector<int> selected = select_devices(cfg_.devices, cfg_.selected_per_round(), select_rng_);
  eval::RoundReport report;
  if (cfg_.method == Method::kFedAvg) {
    step_fedavg(report, selected);
  } else {
    step_ecct_or_gkt(report, selected);
  }
  ++round_;
  return report;
}

void Simulation::step_ecct_or_gkt(eval::RoundReport& report, const std::vector<int>& selected) {
  const int round = round_;
  std::vector<AsyncDecision> decisions;
  for (int k : selected) decisions.push_back(apply_async_mode(cfg_, participants_[static_cast<std::size_t>(k)]));

  CloudRoundStats cloud_stats;
  std::vector<EdgeRoundStats> edge_stats(selected.size());
  std::vector<std::function<void()>> tasks;
  tasks.emplace_back([&] { cloud_stats = cloud_train_round(cloud_, *env_, round, selected); });
  for (std::size_t i = 0; i < selected.size(); ++i) {
    tasks.emplace_back([&, i] {
      edge_stats[i] = edge_train_round(participants_[static_cast<std::size_t>(selected[i])], *env_, round,
                                       decisions[i].epochs);
    });
  }
  run_parallel(tasks, cfg_.parallel);

  // Exchanges happen at the round barrier, in device order.
  for (std::size_t i = 0; i < selected.size(); ++i)
    if (decisions[i].communicates) deliver(selected[i], report);

  report = [&] {
    eval::RoundReport r = evaluate(round);
    r.packets_up = report.packets_up;
    r.packets_down = report.packets_down;
    r.rows_up = report.rows_up;
    r.rows_down = report.rows_down;
    r.bytes_up = report.bytes_up;
    r.bytes_down = report.bytes_down;
    return r;
  }();
  report.cloud_skipped = cloud_stats.skipped;
  report.cloud_loss = cloud_stats.skipped ? eval::kUndefined : cloud_stats.loss;
  report.join_errors = cloud_stats.join_errors;
  report.devices_trained = static_cast<int>(selected.size());
  double loss_sum = 0;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    auto& m = report.devices[static_cast<std::size_t>(selected[i])];
    m.trained = true;
    m.epochs = edge_stats[i].epochs;
    m.loss = edge_stats[i].loss;
    loss_sum += edge_stats[i].loss;
    report.teacher_missing += edge_stats[i].teacher_missing;
  }
  report.device_loss_mean = loss_sum / static_cast<double>(selected.size());
}

void Simulation::deliver(int device, eval::RoundReport& report) {
  auto& p = participants_[static_cast<std::size_t>(device)];
  for (const auto& packet : p.outbox) {
    cloud_.stores[static_cast<std::size_t>(device)].apply(packet);
    if (events_) events_->record(packet, round_, "deliver");
    ++report.packets_up;
    report.rows_up += static_cast<Index>(packet.rows());
    report.bytes_up += static_cast<Index>(packet.payload_bytes());
  }
  p.outbox.clear();
  auto& down = cloud_.outbox[static_cast<std::size_t>(device)];
  for (const auto& packet : down) {
    p.store.apply(packet);
    if (events_) events_->record(packet, round_, "deliver");
    ++report.packets_down;
    report.rows_down += static_cast<Index>(packet.rows());
    report.bytes_down += static_cast<Index>(packet.payload_bytes());
  }
  down.clear();
}

void Simulation::step_fedavg(eval::RoundReport& report, const std::vector<int>& selected) {
  const int round = round_;
  const nn::VectorXd g_enc = global_->encoder.serialize_params();
  const nn::VectorXd g_cls = global_->classifier.serialize_params();
  std::vector<AsyncDecision> decisions;
  for (int k : selected) {
    auto& p = participants_[static_cast<std::size_t>(k)];
    decisions.push_back(apply_async_mode(cfg_, p));
    if (p.needs_global) {
      p.model.encoder.deserialize_params(std::span<const double>(g_enc.data(), static_cast<std::size_t>(g_enc.size())));
      p.model.classifier.deserialize_params(
          std::span<const double>(g_cls.data(), static_cast<std::size_t>(g_cls.size())));
      p.needs_global = false;
    }
  }

  std::vector<EdgeRoundStats> edge_stats(selected.size());
  std::vector<std::function<void()>> tasks;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    tasks.emplace_back([&, i] {
      edge_stats[i] = edge_train_round(participants_[static_cast<std::size_t>(selected[i])], *env_, round,
                                       decisions[i].epochs, false);
    });
  }
  run_parallel(tasks, cfg_.parallel);

  std::vector<const EdgeModel*> uploaders;
  std::vector<double> counts;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (!decisions[i].communicates) continue;
    auto& p = participants_[static_cast<std::size_t>(selected[i])];
    uploaders.push_back(&p.model);
    counts.push_back(static_cast<double>(p.train_ids.size()));
    p.needs_global = true;
    ++report.packets_up;
    report.bytes_up += static_cast<Index>(
        8 * (p.model.encoder.parameter_count() + p.model.classifier.parameter_count()));
  }
  fedavg_aggregate(*global_, uploaders, counts);

  const Index up = report.packets_up, bytes = report.bytes_up;
  report = evaluate(round);
  report.packets_up = up;
  report.bytes_up = bytes;
  report.cloud_skipped = true;
  report.devices_trained = static_cast<int>(selected.size());
  double loss_sum = 0;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    auto& m = report.devices[static_cast<std::size_t>(selected[i])];
    m.trained = true;
    m.epochs = edge_stats[i].epochs;
    m.loss = edge_stats[i].loss;
    loss_sum += edge_stats[i].loss;
  }
  report.device_loss_mean = loss_sum / static_cast<double>(selected.size());
}

RunResult run(Simulation& sim, const std::optional<std::filesystem::path>& run_dir, const ReportObserver& observer) {
  const TrainingConfig& cfg = sim.config();
  std::ofstream metrics;
  std::unique_ptr<transfer::EventLog> events;
  if (run_dir) {
    std::filesystem::create_directories(*run_dir);
    std::ofstream(*run_dir / "config.resolved") << format_config(cfg);
    metrics.open(*run_dir / "metrics.jsonl");
    if (!metrics) throw InputError("cannot write " + (*run_dir / "metrics.jsonl").string());
    if (cfg.output.events) {
      std::optional<std::filesystem::path> sidecar;
      if (cfg.output.payloads) sidecar = *run_dir / "payloads.bin";
      events = std::make_unique<transfer::EventLog>(*run_dir / "events.jsonl", sidecar, cfg.output.event_ids);
      sim.attach_event_log(events.get());
    }
  }
  RunResult result;
  auto emit = [&](eval::RoundReport r) {
    if (metrics.is_open()) metrics << eval::to_json(r).dump() << '\n';
    if (observer) observer(r);
    result.reports.push_back(std::move(r));
  };
  if (sim.next_round() == 0) emit(sim.initial_report());
  while (!sim.finished()) emit(sim.step());
  sim.attach_event_log(nullptr);

  if (run_dir && cfg.output.checkpoints) {
    const auto dir = *run_dir / "checkpoints";
    std::filesystem::create_directories(dir);
    for (const auto& p : sim.participants()) {
      const std::string stem = "device_" + std::to_string(p.device_id);
      nn::write_checkpoint(dir / (stem + "_encoder.ecctnet"), p.model.encoder);
      nn::write_checkpoint(dir / (stem + "_classifier.ecctnet"), p.model.classifier);
    }
    if (sim.cloud().active) {
      if (sim.cloud().encoder) nn::write_checkpoint(dir / "cloud_encoder.ecctnet", *sim.cloud().encoder);
      nn::write_checkpoint(dir / "cloud_classifier.ecctnet", sim.cloud().classifier);
    }
    if (sim.global_model()) {
      nn::write_checkpoint(dir / "global_encoder.ecctnet", sim.global_model()->encoder);
      nn::write_checkpoint(dir / "global_classifier.ecctnet", sim.global_model()->classifier);
    }
  }
  return result;
}

RunResult run(const TrainingConfig& cfg, const std::optional<std::filesystem::path>& run_dir,
              const ReportObserver& observer) {
  Simulation sim(cfg);
  return run(sim, run_dir, observer);
}

RunResult run_ecct(TrainingConfig cfg) {
  cfg.method = Method::kEcct;
  return run(cfg);
}

RunResult run_fedavg(TrainingConfig cfg) {
  cfg.method = Method::kFedAvg;
  return run(cfg);
}

RunResult run_fedgkt(TrainingConfig cfg) {
  cfg.method = Method::kFedGkt;
  return run(cfg);
}

double final_edge_accuracy(const RunResult& result, int window) {
  if (result.reports.empty()) throw InputError("run produced no reports");
  if (result.reports.size() == 1) return result.reports.front().edge_accuracy_pooled;
  const std::size_t trained = result.reports.size() - 1;
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(std::max(window, 1)), trained);
  double sum = 0;
  for (std::size_t i = result.reports.size() - w; i < result.reports.size(); ++i)
    sum += result.reports[i].edge_accuracy_pooled;
  return sum / static_cast<double>(w);
}

std::vector<eval::RoundReport> load_metrics(const std::filesystem::path& run_dir) {
  std::ifstream in(run_dir / "metrics.jsonl");
  if (!in) throw InputError("cannot read " + (run_dir / "metrics.jsonl").string());
  std::vector<eval::RoundReport> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(eval::report_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw InputError("metrics.jsonl line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace ecct
