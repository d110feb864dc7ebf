// Copyright 2026 The ECCT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

// Checkpoint files: an ASCII architecture header followed by the canonical
// flat parameter vector as raw little-endian IEEE-754 doubles.
//
//   ECCTNET 1\n
//   <input_dim> <n_layers> <out>:<act> ...\n
//   <count as uint64 LE><count doubles LE>

#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>

#include "ecct/nn.hpp"

namespace ecct::nn {

void write_checkpoint(std::ostream& out, const DenseNetd& net);
void write_checkpoint(const std::filesystem::path& path, const DenseNetd& net);

DenseNetd read_checkpoint(std::istream& in);
DenseNetd read_checkpoint(const std::filesystem::path& path);

/// Raw little-endian doubles, no header. Shared with the packet payload sidecar.
void write_le_doubles(std::ostream& out, std::span<const double> values);
void read_le_doubles(std::istream& in, std::span<double> values);

}  // namespace ecct::nn
