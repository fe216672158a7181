#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gsfda {

// One registered analytic-vs-finite-difference suite. The error metric is
// |analytic - fd| / max(|fd|, 1e-2), so err < 1e-4 is exactly the tolerance
// "within max(1e-4 relative, 1e-6 absolute)".
struct GradCheckResult {
  std::string name;
  double max_err = 0.0;
  int trials = 0;
  bool pass = false;
};

constexpr double kGradCheckTol = 1e-4;

// Runs all suites (cross-entropy chain, neighborhood-consistency loss at the
// logits and through the parameters, sparsity penalty, embedding gradient
// compensation, protected-update gradient scaling) over `trials` randomized
// instances each.
std::vector<GradCheckResult> run_gradchecks(std::uint64_t seed, int trials = 20);

}  // namespace gsfda
