#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "psynth/losses.hpp"
#include "psynth/model.hpp"

namespace psynth {

// K = 3, base 4, internal 2048, output 2000.
ModelConfig gradcheck_config_tiny();
// K = 5, base 8, internal 4096, output 4000.
ModelConfig gradcheck_config_small();
// "tiny" or "small"; throws InvalidArgument.
ModelConfig gradcheck_config(std::string_view size);

struct GradCheckOptions {
  double eps = 1e-4;
  std::size_t n_params = 50;
  std::uint64_t seed = 0;
  bool zero_inputs = false;  // zero envelope, zero features, zero target
};

struct GradCheckEntry {
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_analytic = 0.0;
  double max_abs_numeric = 0.0;
  // Probes whose +-eps evaluations changed the sign of an activation or residual;
  // each was replaced by a fresh parameter.
  std::size_t kink_crossings = 0;
  std::vector<GradCheckEntry> entries;
};

/// Analytic gradient of the selected loss against central differences on
/// randomly chosen parameters. Relative error uses max(|analytic|, 1e-8).
/// Only probes whose +-eps evaluations stay on the same side of every kink count.
GradCheckReport gradient_check(const ModelConfig& config, const LossConfig& loss, const GradCheckOptions& opts = {});

}  // namespace psynth
