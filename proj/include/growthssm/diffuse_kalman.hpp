#pragma once

#include <vector>

#include "growthssm/ssm_core.hpp"

namespace growthssm {

/// Prediction error of one scalar observation.
struct ScalarInnovation {
    std::size_t step = 0;
    std::size_t entry = 0;
    double innovation = 0.0;
    /// Innovation variance given all earlier observations (for absorbing
    /// scalars: given the diffuse elements).
    double variance = 0.0;
    /// Squared size of the new diffuse direction an absorbing scalar reveals.
    double diffuse_variance = 0.0;
    bool absorbed = false;
};

struct FilterResult {
    /// Sum of -0.5 (log 2 pi + log F + v^2 / F) over observed scalars that did
    /// not absorb a diffuse direction.
    double loglik = 0.0;
    /// Density of the error contrasts that are invariant to the diffuse elements:
    /// log of the integral of p(y | delta) over delta, plus 0.5 log|S| with S the
    /// Gram matrix of the diffuse design. Invariant to reparameterizing the
    /// diffuse elements, which makes it the estimation objective.
    double marginal_loglik = 0.0;
    int d_absorbed = 0;
    int d_required = 0;
    /// Observed (non-missing) scalars.
    std::size_t n_used = 0;
    std::vector<ScalarInnovation> innovations;

    /// Filtered state after the updates of each step; empty unless requested.
    std::vector<VectorXd> filtered_mean;
    std::vector<MatrixXd> filtered_cov;
    /// True where part of the state was still diffuse after the step's updates.
    std::vector<bool> filtered_diffuse;
};

struct FilterOptions {
    bool keep_innovations = true;
    bool keep_states = true;
};

struct SmootherResult {
    /// Absolute times of the series steps.
    std::vector<double> times;
    std::vector<VectorXd> mean;
    std::vector<MatrixXd> cov;
    VectorXd beta;
    MatrixXd beta_cov;
    FilterResult filter;
};

/// Linear combination of smoothed states over time.
struct ComponentSeries {
    std::vector<double> times;
    std::vector<double> estimate;
    std::vector<double> variance;

    std::size_t size() const { return times.size(); }
};

/// Exact diffuse Kalman filter with one scalar update per observed entry. The
/// diffuse elements are carried as extra columns and estimated by generalized
/// least squares in information form, so no scalar has to be split into
/// infinite and finite variance parts.
/// Throws InsufficientDataError if observed data exist but do not identify all
/// diffuse elements, and NumericalError on a singular innovation variance after
/// the diffuse phase.
FilterResult diffuse_filter(const StateSpaceModel& model, const ObservationSeries& series,
                            const FilterOptions& options = {});

/// Fixed-interval smoother matching `diffuse_filter`, giving smoothed states at
/// every series step, missing-only steps included.
SmootherResult diffuse_smoother(const StateSpaceModel& model, const ObservationSeries& series);

ComponentSeries extract_component(const SmootherResult& smoothed, const RowVectorXd& selector);

} // namespace growthssm
