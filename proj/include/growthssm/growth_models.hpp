#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "growthssm/diffuse_kalman.hpp"
#include "growthssm/ssm_core.hpp"

namespace growthssm {

/// Shape functions g(theta, t); the curve is f(t) = constant + scale * g(theta, t).
enum class CurveFamily { linear, exponential, logistic, gompertz, richards };

/// Number of shape parameters: 0, 1, 2, 2, 3.
int parameter_arity(CurveFamily family);
bool uses_phi(CurveFamily family);
bool uses_rho(CurveFamily family);
bool uses_nu(CurveFamily family);

std::string to_string(CurveFamily family);
/// Case-insensitive; throws InputError on unknown names.
CurveFamily parse_family(std::string_view name);

struct CurveParams {
    double phi = 1.0;
    double rho = 1.0;
    double nu = 1.0;

    bool operator==(const CurveParams&) const = default;
};

/// Throws InputError unless every parameter the family uses is finite and positive.
void validate_params(CurveFamily family, const CurveParams& params);

struct NoiseParams {
    double sigma2_eps = 0.0;
    double sigma2_eta = 0.0;
    double sigma2_dev = 0.0;

    bool operator==(const NoiseParams&) const = default;
};

enum class CurveMode { parametric, semiparametric };
enum class Deviations { none, random_walk };

std::string to_string(CurveMode mode);
CurveMode parse_mode(std::string_view name);
std::string to_string(Deviations deviations);
Deviations parse_deviations(std::string_view name);

struct GrowthModelSpec {
    CurveFamily family = CurveFamily::logistic;
    CurveMode mode = CurveMode::parametric;
    CurveParams curve;
    NoiseParams noise;
    Deviations deviations = Deviations::none;
    /// Declared replicate labels; their order fixes the deviation state layout.
    std::vector<std::string> replicates;

    Index replicate_count() const { return static_cast<Index>(replicates.size()); }
    /// sigma2_eta as used by the model: zero in parametric mode.
    double effective_sigma2_eta() const { return mode == CurveMode::parametric ? 0.0 : noise.sigma2_eta; }

    bool operator==(const GrowthModelSpec&) const = default;
};

/// Non-fatal issues, e.g. random-walk deviations with a single replicate.
std::vector<std::string> spec_warnings(const GrowthModelSpec& spec);

/// g(theta, t). Throws NumericalError if the value is not finite.
double eval_g(CurveFamily family, const CurveParams& params, double t);

/// [1, g(t_next) - g(t); 0, 1]
Eigen::Matrix2d transition(CurveFamily family, const CurveParams& params, double t, double t_next);

/// sigma2_eta * [D^3/3, D^2/2; D^2/2, D] with D = |g(t_next) - g(t)|.
Eigen::Matrix2d process_noise(CurveFamily family, const CurveParams& params, double sigma2_eta, double t,
                              double t_next);

/// State [f(t); scale], both diffuse, no process noise.
StateSpaceModel build_parametric(CurveFamily family, const CurveParams& params, const NoiseParams& noise,
                                 const ObservationSeries& series);

/// As build_parametric with process noise from `process_noise`.
StateSpaceModel build_semiparametric(CurveFamily family, const CurveParams& params, const NoiseParams& noise,
                                     const ObservationSeries& series);

/// State [f; scale; w_1 .. w_K]: the curve block is diffuse, the random-walk
/// deviations start at exactly zero.
StateSpaceModel build_fme(const GrowthModelSpec& spec, const ObservationSeries& series);

/// Dispatches on mode and deviations.
StateSpaceModel build_model(const GrowthModelSpec& spec, const ObservationSeries& series);

/// Selector of the mean curve f(t) / mu_t.
RowVectorXd mean_selector(const GrowthModelSpec& spec);
/// Selector of replicate i's deviation curve (FME models only).
RowVectorXd deviation_selector(const GrowthModelSpec& spec, Index replicate);

struct ConstantScale {
    double constant = 0.0;
    double scale = 0.0;
};

/// Recovers f(t) = constant + scale * g(t) from a parametric smoother run.
/// Throws InputError for semiparametric specs, where the second state element
/// no longer is a fixed scale.
ConstantScale recover_constant_scale(const SmootherResult& smoothed, const GrowthModelSpec& spec);

/// Simulates the model of `spec` with f(0) = constant + scale * g(0), every
/// replicate observed at every time. Times are taken relative to the first.
Dataset simulate_growth(const GrowthModelSpec& spec, double constant, double scale, const std::vector<double>& times,
                        std::uint64_t seed, const std::string& group = "sim");

} // namespace growthssm
