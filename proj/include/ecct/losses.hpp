// Copyright 2026 The ECCT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

// Cross-entropy and temperature-softened distillation losses, plus the
// device and server objectives composed from them.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ecct/errors.hpp"
#include "ecct/nn.hpp"

namespace ecct::loss {

using nn::Index;
template <typename Scalar>
using Matrix = nn::Matrix<Scalar>;
template <typename Scalar>
using Vector = nn::Vector<Scalar>;

using Labels = std::span<const int>;
using RowMask = std::vector<bool>;

/// Argument order of the KL divergence: KL(teacher || student) or the reverse.
enum class KdDirection { kTeacherStudent, kStudentTeacher };

/// How the server objective combines per-device distillation terms.
enum class ServerKdNorm { kMeanOverDevices, kSum };

struct LossConfig {
  double alpha_s = 1.0;
  double alpha_d = 1.0;
  double kd_temperature = 2.0;
  int two_stage_switch_round = 50;
  bool filtered_kd = true;
  KdDirection kd_direction = KdDirection::kTeacherStudent;
  ServerKdNorm server_kd_norm = ServerKdNorm::kMeanOverDevices;

  void validate() const {
    if (!(kd_temperature > 0)) throw ConfigError("kd temperature must be positive");
    if (!(alpha_s >= 0) || !(alpha_d >= 0)) throw ConfigError("distillation strengths must be nonnegative");
    if (two_stage_switch_round < 0) throw ConfigError("two-stage switch round must be nonnegative");
  }
};

template <typename Scalar>
struct LossResult {
  Scalar value = 0;
  Matrix<Scalar> grad;  // w.r.t. the student / predicted logits
};

template <typename Scalar>
Vector<Scalar> softmax(const Eigen::Ref<const Vector<Scalar>>& logits, Scalar temperature = 1) {
  if (!(temperature > 0)) throw InputError("temperature must be positive");
  if (!logits.allFinite()) throw InputError("softmax of non-finite logits");
  Vector<Scalar> z = logits / temperature;
  z.array() -= z.maxCoeff();
  z = z.array().exp();
  return z / z.sum();
}

/// Row-wise log-softmax. Each row is computed on its own with scalar
/// exp/log, so a row's result does not depend on the rest of the batch.
template <typename Scalar>
Matrix<Scalar> log_softmax_rows(const Eigen::Ref<const Matrix<Scalar>>& logits, Scalar temperature = 1) {
  Matrix<Scalar> z(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    Scalar m = logits(i, 0) / temperature;
    for (Index c = 1; c < logits.cols(); ++c) m = std::max(m, logits(i, c) / temperature);
    Scalar sum = 0;
    for (Index c = 0; c < logits.cols(); ++c) {
      z(i, c) = logits(i, c) / temperature - m;
      sum += std::exp(z(i, c));
    }
    const Scalar lse = std::log(sum);
    for (Index c = 0; c < logits.cols(); ++c) z(i, c) -= lse;
  }
  return z;
}

/// Row-wise softmax of a [B x C] matrix.
template <typename Scalar>
Matrix<Scalar> softmax_rows(const Eigen::Ref<const Matrix<Scalar>>& logits, Scalar temperature = 1) {
  if (!(temperature > 0)) throw InputError("temperature must be positive");
  if (!logits.allFinite()) throw InputError("softmax of non-finite logits");
  Matrix<Scalar> z(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    Scalar m = logits(i, 0) / temperature;
    for (Index c = 1; c < logits.cols(); ++c) m = std::max(m, logits(i, c) / temperature);
    Scalar sum = 0;
    for (Index c = 0; c < logits.cols(); ++c) {
      z(i, c) = std::exp(logits(i, c) / temperature - m);
      sum += z(i, c);
    }
    for (Index c = 0; c < logits.cols(); ++c) z(i, c) /= sum;
  }
  return z;
}


/// Lowest-index argmax of one row.
template <typename Derived>
Index argmax_row(const Eigen::MatrixBase<Derived>& row) {
  Index best = 0;
  for (Index c = 1; c < row.size(); ++c)
    if (row(c) > row(best)) best = c;
  return best;
}

/// Mean negative log-likelihood over the batch; gradient (softmax - onehot) / B.
template <typename Scalar>
LossResult<Scalar> cross_entropy(const Eigen::Ref<const Matrix<Scalar>>& logits, Labels labels) {
  const Index batch = logits.rows();
  const Index classes = logits.cols();
  if (static_cast<Index>(labels.size()) != batch) throw ShapeError("label count does not match batch");
  if (batch == 0) throw InputError("cross entropy of an empty batch");
  for (int y : labels)
    if (y < 0 || y >= classes) throw InputError("label " + std::to_string(y) + " out of range");
  if (!logits.allFinite()) throw InputError("cross entropy of non-finite logits");
  const Matrix<Scalar> log_p = log_softmax_rows<Scalar>(logits, Scalar(1));
  LossResult<Scalar> r;
  r.grad.resize(batch, classes);
  for (Index i = 0; i < batch; ++i)
    for (Index c = 0; c < classes; ++c) r.grad(i, c) = std::exp(log_p(i, c));
  Scalar total = 0;
  for (Index i = 0; i < batch; ++i) {
    total -= log_p(i, labels[i]);
    r.grad(i, labels[i]) -= Scalar(1);
  }
  r.value = total / static_cast<Scalar>(batch);
  r.grad /= static_cast<Scalar>(batch);
  return r;
}

/// True where the teacher's lowest-index argmax equals the label.
template <typename Scalar>
RowMask filtered_mask(const Eigen::Ref<const Matrix<Scalar>>& teacher_logits, Labels labels) {
  if (static_cast<Index>(labels.size()) != teacher_logits.rows())
    throw ShapeError("label count does not match teacher batch");
  RowMask mask(labels.size());
  for (Index i = 0; i < teacher_logits.rows(); ++i) mask[i] = argmax_row(teacher_logits.row(i)) == labels[i];
  return mask;
}

/// Temperature-scaled KL divergence between softened teacher and student,
/// multiplied by T^2 and averaged over the rows selected by `mask` (all rows
/// when `mask` is null). No rows selected yields exactly zero. The teacher is
/// a constant; the gradient is w.r.t. the student logits only.
template <typename Scalar>
LossResult<Scalar> kd_divergence(const Eigen::Ref<const Matrix<Scalar>>& student,
                                 const Eigen::Ref<const Matrix<Scalar>>& teacher, Scalar temperature,
                                 const RowMask* mask = nullptr,
                                 KdDirection direction = KdDirection::kTeacherStudent) {
  if (student.rows() != teacher.rows() || student.cols() != teacher.cols())
    throw ShapeError("student and teacher logits differ in shape");
  if (mask && static_cast<Index>(mask->size()) != student.rows()) throw ShapeError("mask length does not match batch");
  if (!(temperature > 0)) throw InputError("temperature must be positive");
  LossResult<Scalar> r;
  r.grad = Matrix<Scalar>::Zero(student.rows(), student.cols());
  Index count = 0;
  for (Index i = 0; i < student.rows(); ++i)
    if (!mask || (*mask)[i]) ++count;
  if (count == 0) return r;

  const Matrix<Scalar> log_q = log_softmax_rows<Scalar>(student, temperature);
  const Matrix<Scalar> log_p = log_softmax_rows<Scalar>(teacher, temperature);
  Scalar total = 0;
  const Scalar n = static_cast<Scalar>(count);
  for (Index i = 0; i < student.rows(); ++i) {
    if (mask && !(*mask)[i]) continue;
    Scalar row = 0;
    if (direction == KdDirection::kTeacherStudent) {
      for (Index c = 0; c < student.cols(); ++c) {
        const Scalar p = std::exp(log_p(i, c));
        if (p > 0) row += p * (log_p(i, c) - log_q(i, c));
        r.grad(i, c) = temperature * (std::exp(log_q(i, c)) - p) / n;
      }
    } else {
      for (Index c = 0; c < student.cols(); ++c) {
        const Scalar q = std::exp(log_q(i, c));
        if (q > 0) row += q * (log_q(i, c) - log_p(i, c));
      }
      for (Index c = 0; c < student.cols(); ++c) {
        const Scalar q = std::exp(log_q(i, c));
        r.grad(i, c) = temperature * q * ((log_q(i, c) - log_p(i, c)) - row) / n;
      }
    }
    total += std::max(row, Scalar(0));
  }
  r.value = temperature * temperature * total / n;
  return r;
}

/// (alpha_s, alpha_d) in effect at `round`: zero during the embedding-only stage.
inline std::pair<double, double> effective_alphas(const LossConfig& cfg, int round) {
  if (round < cfg.two_stage_switch_round) return {0.0, 0.0};
  return {cfg.alpha_s, cfg.alpha_d};
}

/// Counterpart logits used as a distillation teacher. `available` marks rows
/// for which a counterpart prediction exists; empty means all rows.
template <typename Scalar>
struct TeacherLogits {
  Matrix<Scalar> logits;
  RowMask available;
};

template <typename Scalar>
struct ObjectiveResult {
  Scalar value = 0;
  Scalar ce = 0;
  Scalar kd = 0;
  Matrix<Scalar> grad;
  bool teacher_missing = false;
  Index kd_rows = 0;
};

namespace detail {

template <typename Scalar>
RowMask teacher_mask(const TeacherLogits<Scalar>& teacher, Labels labels, bool filtered) {
  RowMask mask = teacher.available.empty() ? RowMask(labels.size(), true) : teacher.available;
  if (mask.size() != labels.size()) throw ShapeError("teacher availability mask does not match batch");
  if (filtered) {
    const RowMask right = filtered_mask<Scalar>(teacher.logits, labels);
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = mask[i] && right[i];
  }
  return mask;
}

inline Index count_true(const RowMask& m) { return static_cast<Index>(std::count(m.begin(), m.end(), true)); }

}  // namespace detail

/// Device objective: CE + alpha_d * KD(student = device, teacher = server).
/// A null teacher (no server packet yet) contributes no KD term.
template <typename Scalar>
ObjectiveResult<Scalar> device_loss(const Eigen::Ref<const Matrix<Scalar>>& device_logits,
                                    const TeacherLogits<Scalar>* server_teacher, Labels labels,
                                    const LossConfig& cfg, int round) {
  LossResult<Scalar> ce = cross_entropy<Scalar>(device_logits, labels);
  ObjectiveResult<Scalar> r;
  r.ce = ce.value;
  r.value = ce.value;
  r.grad = std::move(ce.grad);
  r.teacher_missing = server_teacher == nullptr;
  const double alpha_d = effective_alphas(cfg, round).second;
  if (alpha_d == 0 || server_teacher == nullptr) return r;
  const RowMask mask = detail::teacher_mask(*server_teacher, labels, cfg.filtered_kd);
  r.kd_rows = detail::count_true(mask);
  const LossResult<Scalar> kd = kd_divergence<Scalar>(device_logits, server_teacher->logits,
                                                      static_cast<Scalar>(cfg.kd_temperature), &mask,
                                                      cfg.kd_direction);
  const Scalar a = static_cast<Scalar>(alpha_d);
  r.kd = kd.value;
  r.value += a * kd.value;
  r.grad += a * kd.grad;
  return r;
}

template <typename Scalar>
struct ServerObjectiveResult {
  Scalar value = 0;
  Scalar ce = 0;
  Scalar kd = 0;
  std::vector<Matrix<Scalar>> grads;  // one per device block
  Index kd_rows = 0;
};

/// Server objective over per-device blocks: CE averaged over every sample of
/// every block plus alpha_s times the per-device KD terms (student = server,
/// teacher = device), averaged over blocks or summed per `server_kd_norm`.
/// Null teachers contribute zero.
template <typename Scalar>
ServerObjectiveResult<Scalar> server_loss(const std::vector<Matrix<Scalar>>& server_logits,
                                          const std::vector<const TeacherLogits<Scalar>*>& device_teachers,
                                          const std::vector<std::vector<int>>& labels, const LossConfig& cfg,
                                          int round) {
  const std::size_t blocks = server_logits.size();
  if (blocks == 0) throw InputError("server loss needs at least one device block");
  if (device_teachers.size() != blocks || labels.size() != blocks)
    throw ShapeError("server loss inputs disagree on the number of devices");

  Index total_rows = 0;
  const Index classes = server_logits.front().cols();
  for (std::size_t k = 0; k < blocks; ++k) {
    if (server_logits[k].cols() != classes) throw ShapeError("device blocks differ in class count");
    total_rows += server_logits[k].rows();
  }
  Matrix<Scalar> stacked(total_rows, classes);
  std::vector<int> all_labels;
  all_labels.reserve(static_cast<std::size_t>(total_rows));
  Index offset = 0;
  for (std::size_t k = 0; k < blocks; ++k) {
    stacked.middleRows(offset, server_logits[k].rows()) = server_logits[k];
    offset += server_logits[k].rows();
    all_labels.insert(all_labels.end(), labels[k].begin(), labels[k].end());
  }
  const LossResult<Scalar> ce = cross_entropy<Scalar>(stacked, all_labels);

  ServerObjectiveResult<Scalar> r;
  r.ce = ce.value;
  r.value = ce.value;
  offset = 0;
  for (std::size_t k = 0; k < blocks; ++k) {
    r.grads.push_back(ce.grad.middleRows(offset, server_logits[k].rows()));
    offset += server_logits[k].rows();
  }
  const double alpha_s = effective_alphas(cfg, round).first;
  if (alpha_s == 0) return r;

  const Scalar weight = static_cast<Scalar>(
      cfg.server_kd_norm == ServerKdNorm::kMeanOverDevices ? alpha_s / static_cast<double>(blocks) : alpha_s);
  Scalar kd_sum = 0;
  for (std::size_t k = 0; k < blocks; ++k) {
    if (device_teachers[k] == nullptr) continue;
    const RowMask mask = detail::teacher_mask(*device_teachers[k], labels[k], cfg.filtered_kd);
    r.kd_rows += detail::count_true(mask);
    const LossResult<Scalar> kd =
        kd_divergence<Scalar>(server_logits[k], device_teachers[k]->logits,
                              static_cast<Scalar>(cfg.kd_temperature), &mask, cfg.kd_direction);
    kd_sum += kd.value;
    r.grads[k] += weight * kd.grad;
  }
  r.kd = kd_sum;
  r.value += weight * kd_sum;
  return r;
}

}  // namespace ecct::loss
