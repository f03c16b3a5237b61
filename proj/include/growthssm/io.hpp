#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "growthssm/analysis.hpp"
#include "growthssm/estimation.hpp"
#include "growthssm/ssm_core.hpp"

namespace growthssm {

/// Long-format CSV with header group,replicate,time,value. Empty value cells
/// are missing. `source` names the input in error messages.
Dataset parse_long_csv(std::istream& in, const std::string& source = "<input>");
Dataset read_long_csv(const std::filesystem::path& path);

void write_long_csv(const Dataset& data, std::ostream& out);
void write_long_csv(const Dataset& data, const std::filesystem::path& path);

/// Adds missing-value records at every multiple of `step` within each
/// (group, replicate)'s time range that is not already present.
Dataset augment_grid(const Dataset& data, double step);

/// Multiplies every value by `factor`.
Dataset scale_values(const Dataset& data, double factor);

/// Everything needed to report a fit and to re-run its smoother.
struct FitArtifact {
    std::string version = "1";
    std::string group;
    /// Factor the raw values were multiplied by before fitting.
    double value_scale = 1.0;
    GrowthModelSpec spec;
    std::vector<ParamKind> free_params;
    double loglik = 0.0;
    double bic = 0.0;
    std::size_t n_used = 0;
    int d = 0;
    std::optional<ConstantScale> constant_scale;
    ConvergenceReport convergence;
    ComponentSeries mean;
    Band mean_band;
    std::vector<ComponentSeries> deviations;
    std::vector<std::string> warnings;
    /// The fitted data, already scaled.
    Dataset data;

    bool operator==(const FitArtifact&) const;
};

FitArtifact make_artifact(const FitResult& fit, const Dataset& fitted_data, double value_scale);

nlohmann::ordered_json to_json(const FitArtifact& artifact);
FitArtifact artifact_from_json(const nlohmann::ordered_json& doc);

std::string dump_artifact(const FitArtifact& artifact);
void write_artifact(const FitArtifact& artifact, const std::filesystem::path& path);
FitArtifact read_artifact(const std::filesystem::path& path);

/// CSV with columns time,estimate,variance,lower,upper.
void write_band_csv(const Band& band, const std::vector<double>& variance, std::ostream& out);

} // namespace growthssm
