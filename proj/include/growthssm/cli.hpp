#pragma once

#include <iosfwd>
#include <optional>

#include "growthssm/analysis.hpp"
#include "growthssm/io.hpp"

namespace growthssm::cli {

enum ExitCode { ok = 0, usage_error = 1, numerical_failure = 2 };

/// Mean curve of a stored fit re-smoothed on its data, optionally augmented
/// with missing points every `grid_step`.
ComponentSeries predict_mean(const FitArtifact& artifact, std::optional<double> grid_step);

/// Entry point of the command-line tool. Errors go to `err` prefixed "ERROR:".
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace growthssm::cli
