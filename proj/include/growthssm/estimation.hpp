#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "growthssm/diffuse_kalman.hpp"
#include "growthssm/growth_models.hpp"
#include "growthssm/optimizer.hpp"

namespace growthssm {

enum class ParamKind { phi, rho, nu, sigma2_eps, sigma2_eta, sigma2_dev };

std::string to_string(ParamKind kind);
ParamKind parse_param(std::string_view name);

/// Variances map through v = floor + exp(x) so boundary estimates stay representable.
inline constexpr double kVarianceFloor = 1e-12;
inline constexpr double kNuMin = 1e-3;
inline constexpr double kNuMax = 1e3;

/// The free parameters of a fit and their unconstrained coordinates.
class ParamSpace {
  public:
    ParamSpace() = default;
    explicit ParamSpace(std::vector<ParamKind> free) : free_(std::move(free)) {}

    /// Shape parameters of the family, sigma2_eps, sigma2_eta when
    /// semiparametric, sigma2_dev for random-walk deviations with K >= 2;
    /// minus anything listed in `fixed`.
    static ParamSpace for_spec(const GrowthModelSpec& spec, const std::vector<ParamKind>& fixed = {});

    const std::vector<ParamKind>& params() const { return free_; }
    std::size_t size() const { return free_.size(); }
    bool contains(ParamKind kind) const;

    static double to_internal(ParamKind kind, double value);
    static double from_internal(ParamKind kind, double x);

    static double get(const GrowthModelSpec& spec, ParamKind kind);
    static void set(GrowthModelSpec& spec, ParamKind kind, double value);

    VectorXd pack(const GrowthModelSpec& spec) const;
    GrowthModelSpec unpack(const GrowthModelSpec& base, const VectorXd& x) const;
    /// Natural-scale values of the free parameters of `spec`.
    VectorXd values(const GrowthModelSpec& spec) const;

  private:
    std::vector<ParamKind> free_;
};

enum class Algorithm { nelder_mead, quasi_newton_fd };

std::string to_string(Algorithm algorithm);
Algorithm parse_algorithm(std::string_view name);

struct OptimizerConfig {
    Algorithm algorithm = Algorithm::nelder_mead;
    int max_evals = 3000;
    double tolerance = 1e-8;
    int multistart = 5;
    std::uint64_t seed = 1;
    /// Held at the spec's values.
    std::vector<ParamKind> fixed;
    /// Start the first run from the spec's values instead of the heuristics.
    bool start_from_spec = false;
};

struct ConvergenceReport {
    int iterations = 0;
    int evaluations = 0;
    int restarts = 0;
    double final_size = 0.0;
    bool converged = false;
    /// Best log-likelihood reached from each start.
    std::vector<double> start_logliks;
    /// Starts disagreed by more than 1e-4 in log-likelihood.
    bool multimodal = false;
    /// Log-likelihood after each accepted iteration of the winning start.
    std::vector<double> trace;
};

struct FitResult {
    GrowthModelSpec spec;
    ParamSpace space;
    double loglik = 0.0;
    double bic = 0.0;
    std::size_t n_used = 0;
    int d = 0;
    ComponentSeries mean;
    std::vector<ComponentSeries> deviations;
    std::optional<ConstantScale> constant_scale;
    ConvergenceReport convergence;
    std::vector<std::string> warnings;

    std::size_t n_params() const { return space.size(); }
};

/// Heuristic starting values for the curve and noise parameters of `spec`.
/// Needs at least 5 observed values.
GrowthModelSpec initial_values(const GrowthModelSpec& spec, const ObservationSeries& series);

/// Objective used by `fit`: the marginal log-likelihood of the model at `spec`.
double marginal_loglik(const GrowthModelSpec& spec, const ObservationSeries& series);

/// Maximum marginal likelihood fit; deterministic for a fixed config.
FitResult fit(const GrowthModelSpec& spec, const ObservationSeries& series, const OptimizerConfig& cfg = {});

/// -2 loglik + k log(n_used - d). Throws InputError when n_used <= d.
double bic(double loglik, std::size_t n_params, std::size_t n_used, int d);
double bic(const FitResult& fit);

struct Candidate {
    CurveFamily family;
    CurveMode mode;
};

struct SelectionResult {
    /// Successful fits in ascending BIC order; the first is the winner.
    std::vector<FitResult> ranked;
    /// "family/mode: message" for candidates that failed.
    std::vector<std::string> failures;

    const FitResult& winner() const { return ranked.front(); }
};

/// Fits each family x mode combination on top of `base` (deviations and
/// replicates) and ranks them by BIC. Candidates run concurrently.
SelectionResult select_model(const std::vector<CurveFamily>& families, const std::vector<CurveMode>& modes,
                             const GrowthModelSpec& base, const ObservationSeries& series,
                             const OptimizerConfig& cfg = {});

} // namespace growthssm
