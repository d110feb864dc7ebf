// Copyright 2026 The ECCT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <vector>

#include "ecct/errors.hpp"

namespace ecct {

struct FusedBatch {
  Eigen::MatrixXd fused;          // [B x 2 d_e], device half first
  Eigen::Index zero_filled = 0;   // rows with at least one side zero-filled
};

/// Concatenates device and server embeddings row by row as [h_d | h_s].
/// Rows flagged in a missing mask are replaced by zeros on that side.
inline FusedBatch fuse(const Eigen::MatrixXd& h_d, const Eigen::MatrixXd& h_s,
                       const std::vector<bool>* h_d_missing = nullptr,
                       const std::vector<bool>* h_s_missing = nullptr) {
  if (h_d.rows() != h_s.rows()) throw ShapeError("fused embeddings are not row-aligned");
  if (h_d.cols() != h_s.cols()) throw ShapeError("device and server embedding widths differ");
  const Eigen::Index n = h_d.rows();
  const Eigen::Index d = h_d.cols();
  FusedBatch out;
  out.fused.resize(n, 2 * d);
  out.fused.leftCols(d) = h_d;
  out.fused.rightCols(d) = h_s;
  for (Eigen::Index i = 0; i < n; ++i) {
    bool filled = false;
    if (h_d_missing && (*h_d_missing)[static_cast<std::size_t>(i)]) {
      out.fused.row(i).head(d).setZero();
      filled = true;
    }
    if (h_s_missing && (*h_s_missing)[static_cast<std::size_t>(i)]) {
      out.fused.row(i).tail(d).setZero();
      filled = true;
    }
    if (filled) ++out.zero_filled;
  }
  return out;
}

}  // namespace ecct
