#include "growthssm/analysis.hpp"

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <string>

#include "growthssm/error.hpp"

namespace growthssm {

RateSummary growth_rate(const ComponentSeries& mean) {
    const auto n = mean.size();
    if (n < 2) throw InputError("growth rates need at least 2 points, got " + std::to_string(n));
    RateSummary out;
    out.step = mean.times[1] - mean.times[0];
    if (!(out.step > 0.0)) throw InputError("growth rates need increasing times");
    for (std::size_t i = 1; i < n; ++i) {
        const double h = mean.times[i] - mean.times[i - 1];
        if (std::abs(h - out.step) > 1e-9 * out.step) {
            throw InputError("growth rates need a uniform grid; step " + std::to_string(h) + " at time " +
                             std::to_string(mean.times[i]) + " differs from " + std::to_string(out.step));
        }
        out.times.push_back(mean.times[i]);
        out.rate.push_back(mean.estimate[i] - mean.estimate[i - 1]);
    }
    out.max_rate = out.rate.front();
    out.time_of_max = out.times.front();
    for (std::size_t i = 1; i < out.rate.size(); ++i) {
        if (out.rate[i] > out.max_rate) {
            out.max_rate = out.rate[i];
            out.time_of_max = out.times[i];
        }
    }
    return out;
}

double normal_quantile(double level) {
    if (!(level > 0.0 && level < 1.0)) throw InputError("confidence level must lie in (0, 1), got " + std::to_string(level));
    return boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 + 0.5 * level);
}

Band confidence_band(const ComponentSeries& c, double level) {
    const double z = normal_quantile(level);
    Band b;
    b.level = level;
    b.times = c.times;
    b.estimate = c.estimate;
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (c.variance[i] < 0.0) throw InputError("negative variance at time " + std::to_string(c.times[i]));
        const double hw = z * std::sqrt(c.variance[i]);
        b.lower.push_back(c.estimate[i] - hw);
        b.upper.push_back(c.estimate[i] + hw);
    }
    return b;
}

CurveDifference curve_difference(const ComponentSeries& a, const ComponentSeries& b, double level) {
    if (a.times != b.times) {
        throw InputError("curve grids differ (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                         " points); augment both fits to a common grid first");
    }
    CurveDifference out;
    out.difference.times = a.times;
    for (std::size_t i = 0; i < a.size(); ++i) {
        out.difference.estimate.push_back(a.estimate[i] - b.estimate[i]);
        out.difference.variance.push_back(a.variance[i] + b.variance[i]);
    }
    out.band = confidence_band(out.difference, level);
    return out;
}

std::vector<ComponentSeries> deviation_curves(const FitResult& fit) {
    if (fit.spec.deviations != Deviations::random_walk) throw InputError("deviation curves need an FME fit");
    return fit.deviations;
}

} // namespace growthssm
