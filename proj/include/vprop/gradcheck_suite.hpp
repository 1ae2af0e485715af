#pragma once

// Finite-difference checks of every differentiable building block, run in
// double precision on random instances.

#include <cstdint>
#include <string>
#include <vector>

namespace vprop {

struct GradCheckOptions {
  int instances = 50;
  double threshold = 1e-4;
  double step = 1e-5;
  std::uint64_t seed = 1;
};

struct GradCheckResult {
  std::string name;
  int instances = 0;
  /// Instances redrawn because a difference quotient straddled a max kink.
  int resampled = 0;
  double max_relative_error = 0.0;
  bool passed = false;
};

std::vector<GradCheckResult> run_gradcheck_suite(const GradCheckOptions& options = {});

/// One line per check.
std::string format_gradcheck(const std::vector<GradCheckResult>& results);

}  // namespace vprop
