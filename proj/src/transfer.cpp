// Copyright 2026 The ECCT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecct/transfer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include "ecct/checkpoint.hpp"
#include "ecct/errors.hpp"

namespace ecct::transfer {
namespace {

struct Fnv1a {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffULL;
      h *= 0x100000001b3ULL;
    }
  }
  void f64(double d) { u64(std::bit_cast<std::uint64_t>(d)); }
};

template <typename Fn>
void for_each_row_major(const Eigen::MatrixXd& m, Fn&& fn) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) fn(m(r, c));
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

const char* to_string(Direction d) { return d == Direction::kEdgeToCloud ? "edge_to_cloud" : "cloud_to_edge"; }

void KnowledgePacket::validate(Index embedding_dim) const {
  const auto n = static_cast<Index>(rows());
  if (embeddings.rows() != n) throw ShapeError("packet embedding rows do not match sample ids");
  if (embeddings.cols() != embedding_dim)
    throw ShapeError("packet embedding width " + std::to_string(embeddings.cols()) + " differs from " +
                     std::to_string(embedding_dim));
  if (logits && logits->rows() != n) throw ShapeError("packet logit rows do not match sample ids");
  if (!labels.empty() && static_cast<Index>(labels.size()) != n)
    throw ShapeError("packet label count does not match sample ids");
  if (direction == Direction::kEdgeToCloud && static_cast<Index>(labels.size()) != n)
    throw ShapeError("edge-to-cloud packets carry one label per row");
  if (!row_versions.empty() && static_cast<Index>(row_versions.size()) != n)
    throw ShapeError("packet row versions do not match sample ids");
}

std::size_t KnowledgePacket::payload_bytes() const {
  std::size_t values = static_cast<std::size_t>(embeddings.size());
  if (logits) values += static_cast<std::size_t>(logits->size());
  return 8 * (values + sample_ids.size()) + 4 * labels.size();
}

std::uint64_t KnowledgePacket::checksum() const {
  Fnv1a h;
  for (SampleId id : sample_ids) h.u64(static_cast<std::uint64_t>(id));
  for_each_row_major(embeddings, [&](double v) { h.f64(v); });
  if (logits) for_each_row_major(*logits, [&](double v) { h.f64(v); });
  return h.h;
}

KnowledgeBuffer::KnowledgeBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("buffer capacity must be positive");
}

std::optional<KnowledgePacket> KnowledgeBuffer::push(const KnowledgePacket& fragment) {
  const Index n = static_cast<Index>(fragment.rows());
  if (n == 0) return std::nullopt;
  if (fragment.embeddings.rows() != n || (fragment.logits && fragment.logits->rows() != n))
    throw ShapeError("malformed fragment");
  if (!rows_.empty()) {
    if (fragment.producer != producer_ || fragment.direction != direction_ || fragment.recipient != recipient_)
      throw InputError("fragment routed to a buffer of another producer or direction");
    if (fragment.embeddings.cols() != rows_.front().embedding.size())
      throw ShapeError("fragment embedding width differs from pending rows");
  }
  producer_ = fragment.producer;
  recipient_ = fragment.recipient;
  direction_ = fragment.direction;
  last_round_ = fragment.created_round;
  for (Index i = 0; i < n; ++i) {
    Row row{fragment.sample_ids[static_cast<std::size_t>(i)],
            fragment.embeddings.row(i).transpose(),
            std::nullopt,
            fragment.labels.empty() ? kNoLabel : fragment.labels[static_cast<std::size_t>(i)],
            fragment.row_versions.empty() ? fragment.model_version
                                          : fragment.row_versions[static_cast<std::size_t>(i)]};
    if (fragment.logits) row.logits = fragment.logits->row(i).transpose();
    const auto [it, inserted] = index_.try_emplace(row.id, rows_.size());
    if (inserted) {
      rows_.push_back(std::move(row));
    } else {
      rows_[it->second] = std::move(row);
    }
  }
  if (rows_.size() >= capacity_) return flush();
  return std::nullopt;
}

KnowledgePacket slice_rows(const KnowledgePacket& packet, std::size_t begin, std::size_t count) {
  if (begin + count > packet.rows()) throw ShapeError("packet slice out of range");
  const auto b = static_cast<Index>(begin);
  const auto n = static_cast<Index>(count);
  KnowledgePacket s;
  s.producer = packet.producer;
  s.recipient = packet.recipient;
  s.direction = packet.direction;
  s.sample_ids.assign(packet.sample_ids.begin() + b, packet.sample_ids.begin() + b + n);
  s.embeddings = packet.embeddings.middleRows(b, n);
  if (packet.logits) s.logits = packet.logits->middleRows(b, n);
  if (!packet.labels.empty()) s.labels.assign(packet.labels.begin() + b, packet.labels.begin() + b + n);
  if (!packet.row_versions.empty()) {
    s.row_versions.assign(packet.row_versions.begin() + b, packet.row_versions.begin() + b + n);
    s.model_version = *std::max_element(s.row_versions.begin(), s.row_versions.end());
  } else {
    s.model_version = packet.model_version;
  }
  s.created_round = packet.created_round;
  return s;
}

std::vector<KnowledgePacket> KnowledgeBuffer::push_all(const KnowledgePacket& fragment) {
  std::vector<KnowledgePacket> out;
  std::size_t begin = 0;
  while (begin < fragment.rows()) {
    const std::size_t take = std::min(capacity_ - rows_.size(), fragment.rows() - begin);
    if (auto p = push(slice_rows(fragment, begin, take))) out.push_back(std::move(*p));
    begin += take;
  }
  return out;
}

std::optional<KnowledgePacket> KnowledgeBuffer::flush() {
  if (rows_.empty()) return std::nullopt;
  const auto n = static_cast<Index>(rows_.size());
  KnowledgePacket p;
  p.producer = producer_;
  p.recipient = recipient_;
  p.direction = direction_;
  p.created_round = last_round_;
  p.embeddings.resize(n, rows_.front().embedding.size());
  // Logits travel only if every row has them; a flush that straddles the
  // stage switch sends embeddings only.
  const bool all_logits = std::all_of(rows_.begin(), rows_.end(), [](const Row& r) { return r.logits.has_value(); });
  if (all_logits) p.logits = Eigen::MatrixXd(n, rows_.front().logits->size());
  for (Index i = 0; i < n; ++i) {
    const Row& r = rows_[static_cast<std::size_t>(i)];
    p.sample_ids.push_back(r.id);
    p.embeddings.row(i) = r.embedding.transpose();
    if (all_logits) p.logits->row(i) = r.logits->transpose();
    if (direction_ == Direction::kEdgeToCloud) p.labels.push_back(r.label);
    p.row_versions.push_back(r.version);
    p.model_version = std::max(p.model_version, r.version);
  }
  rows_.clear();
  index_.clear();
  return p;
}

KnowledgeStore::KnowledgeStore(Direction accepts, Index embedding_dim)
    : accepts_(accepts), embedding_dim_(embedding_dim) {}

std::size_t KnowledgeStore::apply(const KnowledgePacket& packet) {
  if (packet.direction != accepts_) throw InputError("packet direction does not match this store");
  packet.validate(embedding_dim_);
  std::size_t applied = 0;
  for (std::size_t i = 0; i < packet.rows(); ++i) {
    const auto r = static_cast<Index>(i);
    Entry e;
    e.embedding = packet.embeddings.row(r).transpose();
    if (packet.logits) e.logits = packet.logits->row(r).transpose();
    e.label = packet.labels.empty() ? kNoLabel : packet.labels[i];
    e.version = packet.row_versions.empty() ? packet.model_version : packet.row_versions[i];
    auto it = entries_.find(packet.sample_ids[i]);
    if (it == entries_.end()) {
      entries_.emplace(packet.sample_ids[i], std::move(e));
      ++applied;
      continue;
    }
    Entry& cur = it->second;
    if (e.version < cur.version) continue;
    const bool changed = e.version > cur.version || e.label != cur.label || e.embedding != cur.embedding ||
                         e.logits.has_value() != cur.logits.has_value() || (e.logits && *e.logits != *cur.logits);
    cur = std::move(e);
    if (changed) ++applied;
  }
  return applied;
}

const KnowledgeStore::Entry* KnowledgeStore::find(SampleId id) const {
  const auto it = entries_.find(id);
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<SampleId> KnowledgeStore::ids() const {
  std::vector<SampleId> out;
  out.reserve(entries_.size());
  for (const auto& [id, e] : entries_) out.push_back(id);
  std::sort(out.begin(), out.end());
  return out;
}

std::uint64_t KnowledgeStore::max_version() const {
  std::uint64_t v = 0;
  for (const auto& [id, e] : entries_) v = std::max(v, e.version);
  return v;
}

double KnowledgeStore::mean_version_lag(std::uint64_t current_version) const {
  if (entries_.empty()) return 0.0;
  double total = 0;
  for (const auto& [id, e] : entries_)
    total += current_version >= e.version ? static_cast<double>(current_version - e.version) : 0.0;
  return total / static_cast<double>(entries_.size());
}

Eigen::MatrixXd KnowledgeStore::gather_embeddings(std::span<const SampleId> ids, std::vector<bool>& missing) const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Index>(ids.size()), embedding_dim_);
  missing.assign(ids.size(), false);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (const Entry* e = find(ids[i])) {
      out.row(static_cast<Index>(i)) = e->embedding.transpose();
    } else {
      missing[i] = true;
    }
  }
  return out;
}

bool KnowledgeStore::gather_logits(std::span<const SampleId> ids, Index classes, Eigen::MatrixXd& logits,
                                   std::vector<bool>& available) const {
  logits = Eigen::MatrixXd::Zero(static_cast<Index>(ids.size()), classes);
  available.assign(ids.size(), false);
  bool any = false;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const Entry* e = find(ids[i]);
    if (e && e->logits) {
      if (e->logits->size() != classes) throw ShapeError("stored logits have the wrong class count");
      logits.row(static_cast<Index>(i)) = e->logits->transpose();
      available[i] = true;
      any = true;
    }
  }
  return any;
}

Eigen::MatrixXd privatize(const Eigen::MatrixXd& embeddings, double clip_norm, double noise_sigma, Rng& rng) {
  if (!(clip_norm > 0)) throw ConfigError("clip norm must be positive");
  if (!(noise_sigma >= 0)) throw ConfigError("noise sigma must be nonnegative");
  if (!embeddings.allFinite()) throw InputError("privatize of non-finite embeddings");
  Eigen::MatrixXd out = embeddings;
  for (Index r = 0; r < out.rows(); ++r) {
    const double norm = out.row(r).norm();
    if (norm > clip_norm) out.row(r) *= clip_norm / norm;
  }
  if (noise_sigma > 0) {
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (Index r = 0; r < out.rows(); ++r)
      for (Index c = 0; c < out.cols(); ++c) out(r, c) += noise(rng);
  }
  return out;
}

Eigen::MatrixXd privatize(const Eigen::MatrixXd& embeddings, double clip_norm, double noise_sigma,
                          std::uint64_t seed) {
  Rng rng = make_rng(seed, "privacy");
  return privatize(embeddings, clip_norm, noise_sigma, rng);
}

KnowledgePacket produce_packet(const PacketModel& model, const Eigen::MatrixXd& features,
                               const Eigen::MatrixXd& partner, PacketHeader header, Stage stage) {
  const auto n = static_cast<Index>(header.sample_ids.size());
  if (n == 0) throw InputError("cannot produce a packet for zero samples");
  if (features.rows() != n) throw ShapeError("packet features do not match sample ids");
  if (!header.labels.empty() && static_cast<Index>(header.labels.size()) != n)
    throw ShapeError("packet labels do not match sample ids");

  KnowledgePacket p;
  p.producer = header.producer;
  p.recipient = header.recipient;
  p.direction = header.direction;
  p.created_round = header.round;
  p.model_version = header.version;
  p.row_versions.assign(static_cast<std::size_t>(n), header.version);
  p.labels = std::move(header.labels);
  p.sample_ids = std::move(header.sample_ids);

  Eigen::MatrixXd own = model.encoder ? model.encoder->predict(features) : features;
  p.embeddings = model.encoder ? own : Eigen::MatrixXd(n, 0);

  if (stage == Stage::kFull && model.classifier) {
    using Fusion = PacketModel::Fusion;
    if (model.fusion == Fusion::kNone) {
      p.logits = model.classifier->predict(own);
    } else {
      if (partner.rows() != n || partner.cols() != own.cols())
        throw ShapeError("fusion partner embeddings do not match own embeddings");
      Eigen::MatrixXd fused(n, 2 * own.cols());
      if (model.fusion == Fusion::kOwnFirst) {
        fused << own, partner;
      } else {
        fused << partner, own;
      }
      p.logits = model.classifier->predict(fused);
    }
  }
  return p;
}

nlohmann::json packet_record(const KnowledgePacket& packet, bool include_ids) {
  nlohmann::json j;
  j["producer"] = packet.producer;
  j["recipient"] = packet.recipient;
  j["direction"] = to_string(packet.direction);
  j["rows"] = packet.rows();
  j["embedding_dim"] = packet.embeddings.cols();
  j["classes"] = packet.logits ? packet.logits->cols() : 0;
  j["has_logits"] = packet.logits.has_value();
  j["model_version"] = packet.model_version;
  if (!packet.row_versions.empty())
    j["min_row_version"] = *std::min_element(packet.row_versions.begin(), packet.row_versions.end());
  j["created_round"] = packet.created_round;
  j["bytes"] = packet.payload_bytes();
  j["checksum"] = hex64(packet.checksum());
  if (include_ids) j["ids"] = packet.sample_ids;
  return j;
}

EventLog::EventLog(const std::filesystem::path& jsonl, std::optional<std::filesystem::path> payload_sidecar,
                   bool include_ids)
    : out_(jsonl), include_ids_(include_ids) {
  if (!out_) throw InputError("cannot open event log " + jsonl.string());
  if (payload_sidecar) {
    payload_.open(*payload_sidecar, std::ios::binary);
    if (!payload_) throw InputError("cannot open payload sidecar " + payload_sidecar->string());
    payload_ << "ECCTPKT 1\n";
  }
}

void EventLog::record(const KnowledgePacket& packet, int round, std::string_view event) {
  if (!out_.is_open()) return;
  nlohmann::json rec{{"seq", sequence_}, {"round", round}, {"event", std::string(event)}};
  rec.update(packet_record(packet, include_ids_));
  out_ << rec.dump() << '\n';
  if (payload_.is_open()) {
    const std::uint64_t header[] = {sequence_, packet.rows(), static_cast<std::uint64_t>(packet.embeddings.cols()),
                                    packet.logits ? static_cast<std::uint64_t>(packet.logits->cols()) : 0};
    std::vector<double> as_bits;
    for (std::uint64_t h : header) as_bits.push_back(std::bit_cast<double>(h));
    for (SampleId id : packet.sample_ids) as_bits.push_back(std::bit_cast<double>(static_cast<std::uint64_t>(id)));
    for_each_row_major(packet.embeddings, [&](double v) { as_bits.push_back(v); });
    if (packet.logits) for_each_row_major(*packet.logits, [&](double v) { as_bits.push_back(v); });
    nn::write_le_doubles(payload_, as_bits);
  }
  ++sequence_;
}

}  // namespace ecct::transfer
