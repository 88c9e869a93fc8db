#pragma once

// Finite-difference checks of every hand-written backward pass that feeds a
// training loop. Each suite draws a small random instance per seed and
// compares the analytic gradient with central differences.

#include <cstdint>
#include <string>
#include <vector>

namespace diffava::gradcheck {

struct SuiteResult {
  std::string name;
  int seeds = 0;
  double max_relative_error = 0.0;
  double seconds = 0.0;
};

// Gradient of the temporal contrastive loss with respect to the text rows.
SuiteResult contrastive_suite(int seeds, std::uint64_t base_seed = 1000);
// Attention stack plus fusion parameters under the contrastive loss.
SuiteResult alignment_suite(int seeds, std::uint64_t base_seed = 2000);
// Denoiser parameters under the diffusion objective (both loss kinds).
SuiteResult diffusion_suite(int seeds, std::uint64_t base_seed = 3000);

std::vector<SuiteResult> run_all(int seeds);

}  // namespace diffava::gradcheck
