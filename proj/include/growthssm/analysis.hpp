#pragma once

#include <vector>

#include "growthssm/diffuse_kalman.hpp"
#include "growthssm/estimation.hpp"

namespace growthssm {

/// Differenced growth rates of a curve on a uniform grid. Rates are per grid
/// step; divide by `step` for per-unit-time rates.
struct RateSummary {
    /// Times of the rates: rate[i] = mu(times[i]) - mu(times[i] - step).
    std::vector<double> times;
    std::vector<double> rate;
    double step = 0.0;
    double max_rate = 0.0;
    /// Earliest time attaining max_rate.
    double time_of_max = 0.0;
};

RateSummary growth_rate(const ComponentSeries& mean);

struct Band {
    std::vector<double> times;
    std::vector<double> estimate;
    std::vector<double> lower;
    std::vector<double> upper;
    double level = 0.95;
};

/// Two-sided standard normal quantile z with P(|Z| <= z) = level.
double normal_quantile(double level);

Band confidence_band(const ComponentSeries& c, double level = 0.95);

struct CurveDifference {
    ComponentSeries difference;
    Band band;
    /// Variances were added, i.e. the two curves were treated as independent.
    bool assumes_independence = true;
};

/// a - b on identical grids; variances add.
CurveDifference curve_difference(const ComponentSeries& a, const ComponentSeries& b, double level = 0.95);

/// One deviation curve per replicate of an FME fit.
std::vector<ComponentSeries> deviation_curves(const FitResult& fit);

} // namespace growthssm
