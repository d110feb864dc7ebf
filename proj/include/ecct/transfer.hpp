// Copyright 2026 The ECCT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

// Knowledge exchange between edge devices and the cloud: packets of
// per-sample embeddings and logits, capacity-triggered buffers, versioned
// latest-wins stores and the clip+noise embedding privatizer.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "ecct/datagen.hpp"
#include "ecct/nn.hpp"
#include "ecct/rng.hpp"

namespace ecct::transfer {

using data::SampleId;
using Eigen::Index;

inline constexpr int kCloud = -1;
/// Label placeholder for rows shipped for inference only (local test samples).
inline constexpr int kNoLabel = -1;

enum class Direction { kEdgeToCloud, kCloudToEdge };
enum class Stage { kEmbeddingOnly, kFull };

const char* to_string(Direction d);

struct KnowledgePacket {
  int producer = kCloud;
  int recipient = kCloud;
  Direction direction = Direction::kEdgeToCloud;
  std::vector<SampleId> sample_ids;
  Eigen::MatrixXd embeddings;             // [n x d_e]; d_e may be 0 for logit-only traffic
  std::optional<Eigen::MatrixXd> logits;  // [n x C]; absent in the embedding-only stage
  std::vector<int> labels;                // edge-to-cloud only
  std::vector<std::uint64_t> row_versions;
  std::uint64_t model_version = 0;  // newest producer version among the rows
  int created_round = 0;

  std::size_t rows() const { return sample_ids.size(); }
  /// Throws ShapeError when row counts disagree or d_e differs from `embedding_dim`.
  void validate(Index embedding_dim) const;
  std::size_t payload_bytes() const;
  /// FNV-1a over the little-endian payload (ids, embeddings, logits).
  std::uint64_t checksum() const;
};

/// Accumulates fragments and emits one packet once the number of distinct
/// pending samples reaches capacity. A later fragment row for an already
/// pending sample replaces it in place.
class KnowledgeBuffer {
 public:
  KnowledgeBuffer() = default;
  explicit KnowledgeBuffer(std::size_t capacity);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }

  std::optional<KnowledgePacket> push(const KnowledgePacket& fragment);
  /// Pushes `fragment` in slices no larger than the free space, so every
  /// flushed packet holds exactly `capacity` samples. Flushes in order.
  std::vector<KnowledgePacket> push_all(const KnowledgePacket& fragment);
  /// Emits whatever is pending regardless of capacity.
  std::optional<KnowledgePacket> flush();

 private:
  struct Row {
    SampleId id;
    Eigen::VectorXd embedding;
    std::optional<Eigen::VectorXd> logits;
    int label;
    std::uint64_t version;
  };

  std::size_t capacity_ = 1;
  std::vector<Row> rows_;
  std::unordered_map<SampleId, std::size_t> index_;
  int producer_ = kCloud;
  int recipient_ = kCloud;
  Direction direction_ = Direction::kEdgeToCloud;
  int last_round_ = 0;
};

/// Rows [begin, begin + count) of a packet.
KnowledgePacket slice_rows(const KnowledgePacket& packet, std::size_t begin, std::size_t count);

inline std::optional<KnowledgePacket> buffer_push(KnowledgeBuffer& buf, const KnowledgePacket& fragment) {
  return buf.push(fragment);
}

/// Per-sample knowledge received from the counterpart side.
class KnowledgeStore {
 public:
  struct Entry {
    Eigen::VectorXd embedding;
    std::optional<Eigen::VectorXd> logits;
    int label = kNoLabel;
    std::uint64_t version = 0;
  };

  KnowledgeStore() = default;
  KnowledgeStore(Direction accepts, Index embedding_dim);

  /// Latest-wins by version; equal versions are overwritten by the newer
  /// arrival. Returns the number of rows that were inserted or changed.
  std::size_t apply(const KnowledgePacket& packet);

  const Entry* find(SampleId id) const;
  std::size_t size() const { return entries_.size(); }
  Index embedding_dim() const { return embedding_dim_; }
  Direction accepts() const { return accepts_; }
  /// Stored sample ids in ascending order.
  std::vector<SampleId> ids() const;
  std::uint64_t max_version() const;
  /// Mean of (current_version - stored version) over entries; 0 when empty.
  double mean_version_lag(std::uint64_t current_version) const;

  /// Gathers embeddings for `ids`; rows without an entry are zero and flagged.
  Eigen::MatrixXd gather_embeddings(std::span<const SampleId> ids, std::vector<bool>& missing) const;
  /// Gathers logits for `ids`; rows without stored logits are zero and
  /// marked unavailable. Returns false if no row has logits.
  bool gather_logits(std::span<const SampleId> ids, Index classes, Eigen::MatrixXd& logits,
                     std::vector<bool>& available) const;

 private:
  Direction accepts_ = Direction::kEdgeToCloud;
  Index embedding_dim_ = 0;
  std::unordered_map<SampleId, Entry> entries_;
};

inline std::size_t store_apply(KnowledgeStore& store, const KnowledgePacket& packet) { return store.apply(packet); }

/// Rows rescaled to norm <= clip_norm, then i.i.d. N(0, noise_sigma^2) added.
Eigen::MatrixXd privatize(const Eigen::MatrixXd& embeddings, double clip_norm, double noise_sigma, Rng& rng);
Eigen::MatrixXd privatize(const Eigen::MatrixXd& embeddings, double clip_norm, double noise_sigma,
                          std::uint64_t seed);

/// The model pieces a participant uses to produce knowledge.
struct PacketModel {
  const nn::DenseNetd* encoder = nullptr;     // null: no embeddings are sent
  const nn::DenseNetd* classifier = nullptr;  // null: no logits can be sent
  enum class Fusion { kNone, kOwnFirst, kPartnerFirst } fusion = Fusion::kNone;
};

struct PacketHeader {
  int producer = kCloud;
  int recipient = kCloud;
  Direction direction = Direction::kEdgeToCloud;
  std::vector<SampleId> sample_ids;
  std::vector<int> labels;  // empty for cloud-to-edge
  std::uint64_t version = 0;
  int round = 0;
};

/// Inference-only packet construction. `features` feeds the encoder (or the
/// classifier directly when there is no encoder); `partner` holds counterpart
/// embeddings for fusion, already zero-filled where unknown. Logits are
/// attached only in the full stage.
KnowledgePacket produce_packet(const PacketModel& model, const Eigen::MatrixXd& features,
                               const Eigen::MatrixXd& partner, PacketHeader header, Stage stage);

/// Metadata record for the packet event log.
nlohmann::json packet_record(const KnowledgePacket& packet, bool include_ids = true);

/// JSON-lines packet trace with an optional binary payload sidecar.
///
/// Sidecar layout: "ECCTPKT 1\n", then per packet little-endian uint64
/// fields (sequence, rows, d_e, classes or 0), the sample ids as uint64 and
/// the row-major embeddings and logits as float64.
class EventLog {
 public:
  EventLog() = default;
  EventLog(const std::filesystem::path& jsonl, std::optional<std::filesystem::path> payload_sidecar,
           bool include_ids = true);

  bool is_open() const { return out_.is_open(); }
  void record(const KnowledgePacket& packet, int round, std::string_view event);

 private:
  std::ofstream out_;
  std::ofstream payload_;
  bool include_ids_ = true;
  std::uint64_t sequence_ = 0;
};

}  // namespace ecct::transfer
