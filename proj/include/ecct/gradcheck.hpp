// Copyright 2026 The ECCT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

// Central finite-difference checks of the analytic parameter gradients of
// random networks under every training objective.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ecct::gradcheck {

enum class Objective { kCrossEntropy, kKd, kFilteredKd, kDeviceFused, kServer };

const char* to_string(Objective o);

struct CaseResult {
  Objective objective = Objective::kCrossEntropy;
  double temperature = 1;
  std::size_t parameters = 0;
  double max_relative_error = 0;
  bool passed = true;
};

struct Summary {
  std::vector<CaseResult> cases;
  double worst = 0;
  int failures = 0;
};

/// Relative error |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-5);

/// `cases` random (network, batch, objective) configurations, cycling over
/// the objectives and KD temperatures {1, 2, 4}.
Summary run(int cases, std::uint64_t seed, double tolerance = 1e-4, double step = 1e-6);

}  // namespace ecct::gradcheck
