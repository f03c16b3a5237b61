#include "growthssm/growth_models.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <memory>
#include <sstream>

#include "growthssm/error.hpp"

namespace growthssm {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

} // namespace

int parameter_arity(CurveFamily family) {
    switch (family) {
    case CurveFamily::linear: return 0;
    case CurveFamily::exponential: return 1;
    case CurveFamily::logistic: return 2;
    case CurveFamily::gompertz: return 2;
    case CurveFamily::richards: return 3;
    }
    return 0;
}

bool uses_phi(CurveFamily family) { return parameter_arity(family) >= 2; }
bool uses_rho(CurveFamily family) { return parameter_arity(family) >= 1; }
bool uses_nu(CurveFamily family) { return family == CurveFamily::richards; }

std::string to_string(CurveFamily family) {
    switch (family) {
    case CurveFamily::linear: return "linear";
    case CurveFamily::exponential: return "exponential";
    case CurveFamily::logistic: return "logistic";
    case CurveFamily::gompertz: return "gompertz";
    case CurveFamily::richards: return "richards";
    }
    return "unknown";
}

CurveFamily parse_family(std::string_view name) {
    const auto s = lower(name);
    if (s == "linear") return CurveFamily::linear;
    if (s == "exponential") return CurveFamily::exponential;
    if (s == "logistic") return CurveFamily::logistic;
    if (s == "gompertz") return CurveFamily::gompertz;
    if (s == "richards") return CurveFamily::richards;
    throw InputError("unknown curve family '" + std::string(name) + "'");
}

std::string to_string(CurveMode mode) {
    return mode == CurveMode::parametric ? "parametric" : "semiparametric";
}

CurveMode parse_mode(std::string_view name) {
    const auto s = lower(name);
    if (s == "parametric") return CurveMode::parametric;
    if (s == "semiparametric") return CurveMode::semiparametric;
    throw InputError("unknown mode '" + std::string(name) + "'");
}

std::string to_string(Deviations deviations) {
    return deviations == Deviations::none ? "none" : "random_walk";
}

Deviations parse_deviations(std::string_view name) {
    const auto s = lower(name);
    if (s == "none") return Deviations::none;
    if (s == "random_walk" || s == "random-walk" || s == "rw") return Deviations::random_walk;
    throw InputError("unknown deviation model '" + std::string(name) + "'");
}

void validate_params(CurveFamily family, const CurveParams& params) {
    auto check = [&](bool used, double v, const char* name) {
        if (used && !(std::isfinite(v) && v > 0.0)) {
            std::ostringstream os;
            os << to_string(family) << ": parameter " << name << " must be positive, got " << v;
            throw InputError(os.str());
        }
    };
    check(uses_phi(family), params.phi, "phi");
    check(uses_rho(family), params.rho, "rho");
    check(uses_nu(family), params.nu, "nu");
}

std::vector<std::string> spec_warnings(const GrowthModelSpec& spec) {
    std::vector<std::string> out;
    if (spec.deviations == Deviations::random_walk && spec.replicate_count() < 2) {
        out.push_back("random-walk deviations with fewer than 2 replicates are not identifiable");
    }
    if (spec.mode == CurveMode::semiparametric && spec.noise.sigma2_eta == 0.0) {
        out.push_back("semiparametric mode with sigma2_eta = 0 is the parametric model");
    }
    return out;
}

double eval_g(CurveFamily family, const CurveParams& p, double t) {
    double g = 0.0;
    switch (family) {
    case CurveFamily::linear: g = t; break;
    case CurveFamily::exponential: g = std::exp(-p.rho * t); break;
    case CurveFamily::logistic: g = 1.0 / (1.0 + p.phi * std::exp(-p.rho * t)); break;
    case CurveFamily::gompertz: g = std::exp(-p.phi * std::exp(-p.rho * t)); break;
    case CurveFamily::richards: g = std::exp(-std::log1p(p.phi * std::exp(-p.rho * t)) / p.nu); break;
    }
    if (!std::isfinite(g)) {
        std::ostringstream os;
        os << to_string(family) << " curve is not finite at t = " << t;
        throw NumericalError(os.str());
    }
    return g;
}

Eigen::Matrix2d transition(CurveFamily family, const CurveParams& params, double t, double t_next) {
    if (t_next < t) throw InputError("transition: t_next precedes t");
    Eigen::Matrix2d m;
    m << 1.0, eval_g(family, params, t_next) - eval_g(family, params, t), 0.0, 1.0;
    return m;
}

namespace {

Eigen::Matrix2d noise_block(double sigma2_eta, double delta) {
    Eigen::Matrix2d q;
    const double d2 = delta * delta;
    q << d2 * delta / 3.0, d2 / 2.0, d2 / 2.0, delta;
    return sigma2_eta * q;
}

/// Curve block of the state for one gap.
struct CurveStep {
    double dg = 0.0;
    double gap = 0.0;
};

std::shared_ptr<const std::vector<CurveStep>> curve_steps(CurveFamily family, const CurveParams& params,
                                                          const TimeGrid& grid) {
    auto steps = std::make_shared<std::vector<CurveStep>>();
    if (grid.empty()) return steps;
    steps->reserve(grid.size() - 1);
    double g_prev = eval_g(family, params, grid[0]);
    for (std::size_t j = 0; j + 1 < grid.size(); ++j) {
        const double g_next = eval_g(family, params, grid[j + 1]);
        steps->push_back(CurveStep{g_next - g_prev, grid.gap(j)});
        g_prev = g_next;
    }
    return steps;
}

StateSpaceModel build_curve_model(CurveFamily family, const CurveParams& params, const NoiseParams& noise,
                                  double sigma2_eta, const ObservationSeries& series) {
    validate_params(family, params);
    if (series.steps() == 0) throw InputError("cannot build a model for an empty series");
    if (!(noise.sigma2_eps >= 0.0) || !(sigma2_eta >= 0.0)) {
        throw InputError("noise variances must be non-negative");
    }
    auto steps = curve_steps(family, params, series.grid());
    const double h = noise.sigma2_eps;
    DesignFn design = [h](std::size_t, const ObservationEntry&) {
        return ObservationDesign{RowVectorXd::Unit(2, 0), h};
    };
    TransitionFn trans = [steps, sigma2_eta](std::size_t j) {
        const auto& s = steps->at(j);
        StateTransition tr{MatrixXd::Identity(2, 2), MatrixXd::Zero(2, 2)};
        tr.transition(0, 1) = s.dg;
        if (sigma2_eta > 0.0) tr.covariance = noise_block(sigma2_eta, std::abs(s.dg));
        return tr;
    };
    return StateSpaceModel(2, {0, 1}, VectorXd::Zero(2), MatrixXd::Zero(2, 2), 0, std::move(design),
                           std::move(trans));
}

} // namespace

Eigen::Matrix2d process_noise(CurveFamily family, const CurveParams& params, double sigma2_eta, double t,
                              double t_next) {
    if (!(sigma2_eta >= 0.0)) throw InputError("process_noise: sigma2_eta must be non-negative");
    const double delta = std::abs(eval_g(family, params, t_next) - eval_g(family, params, t));
    return noise_block(sigma2_eta, delta);
}

StateSpaceModel build_parametric(CurveFamily family, const CurveParams& params, const NoiseParams& noise,
                                 const ObservationSeries& series) {
    return build_curve_model(family, params, noise, 0.0, series);
}

StateSpaceModel build_semiparametric(CurveFamily family, const CurveParams& params, const NoiseParams& noise,
                                     const ObservationSeries& series) {
    return build_curve_model(family, params, noise, noise.sigma2_eta, series);
}

StateSpaceModel build_fme(const GrowthModelSpec& spec, const ObservationSeries& series) {
    validate_params(spec.family, spec.curve);
    if (series.steps() == 0) throw InputError("cannot build a model for an empty series");
    const Index k = spec.replicate_count();
    if (k < 1) throw InputError("FME model needs at least one declared replicate");
    const auto& noise = spec.noise;
    if (!(noise.sigma2_eps >= 0.0) || !(noise.sigma2_eta >= 0.0) || !(noise.sigma2_dev >= 0.0)) {
        throw InputError("noise variances must be non-negative");
    }

    auto slots = std::make_shared<std::map<std::string, Index>>();
    for (Index i = 0; i < k; ++i) {
        if (!slots->emplace(spec.replicates[i], i).second) {
            throw InputError("replicate '" + spec.replicates[i] + "' declared twice");
        }
    }
    for (const auto& label : series.replicates()) {
        if (!slots->count(label)) throw InputError("replicate '" + label + "' in data is not declared in the spec");
    }

    const Index m = 2 + k;
    auto steps = curve_steps(spec.family, spec.curve, series.grid());
    const double h = noise.sigma2_eps;
    const double sigma2_eta = spec.effective_sigma2_eta();
    const double sigma2_dev = noise.sigma2_dev;

    DesignFn design = [slots, m, h](std::size_t step, const ObservationEntry& e) {
        const auto it = slots->find(e.replicate);
        if (it == slots->end()) {
            throw InputError("replicate '" + e.replicate + "' at step " + std::to_string(step) +
                             " is not declared in the spec");
        }
        RowVectorXd z = RowVectorXd::Zero(m);
        z(0) = 1.0;
        z(2 + it->second) = 1.0;
        return ObservationDesign{std::move(z), h};
    };
    TransitionFn trans = [steps, m, sigma2_eta, sigma2_dev](std::size_t j) {
        const auto& s = steps->at(j);
        StateTransition tr{MatrixXd::Identity(m, m), MatrixXd::Zero(m, m)};
        tr.transition(0, 1) = s.dg;
        if (sigma2_eta > 0.0) tr.covariance.topLeftCorner(2, 2) = noise_block(sigma2_eta, std::abs(s.dg));
        if (sigma2_dev > 0.0) {
            tr.covariance.bottomRightCorner(m - 2, m - 2).diagonal().setConstant(sigma2_dev * s.gap);
        }
        return tr;
    };
    return StateSpaceModel(m, {0, 1}, VectorXd::Zero(m), MatrixXd::Zero(m, m), 0, std::move(design),
                           std::move(trans));
}

StateSpaceModel build_model(const GrowthModelSpec& spec, const ObservationSeries& series) {
    if (spec.deviations == Deviations::random_walk) return build_fme(spec, series);
    if (spec.mode == CurveMode::parametric) return build_parametric(spec.family, spec.curve, spec.noise, series);
    return build_semiparametric(spec.family, spec.curve, spec.noise, series);
}

RowVectorXd mean_selector(const GrowthModelSpec& spec) {
    const Index m = spec.deviations == Deviations::random_walk ? 2 + spec.replicate_count() : 2;
    return RowVectorXd::Unit(m, 0);
}

RowVectorXd deviation_selector(const GrowthModelSpec& spec, Index replicate) {
    if (spec.deviations != Deviations::random_walk) {
        throw InputError("deviation curves exist only for FME specs");
    }
    if (replicate < 0 || replicate >= spec.replicate_count()) {
        throw InputError("replicate index out of range: " + std::to_string(replicate));
    }
    return RowVectorXd::Unit(2 + spec.replicate_count(), 2 + replicate);
}

ConstantScale recover_constant_scale(const SmootherResult& smoothed, const GrowthModelSpec& spec) {
    if (spec.mode != CurveMode::parametric) {
        throw InputError("constant and scale are not defined for a semiparametric curve");
    }
    if (smoothed.mean.empty()) throw InputError("empty smoother result");
    const auto& first = smoothed.mean.front();
    ConstantScale cs;
    cs.scale = first(1);
    cs.constant = first(0) - cs.scale * eval_g(spec.family, spec.curve, 0.0);
    return cs;
}


Dataset simulate_growth(const GrowthModelSpec& spec_in, double constant, double scale, const std::vector<double>& times,
                        std::uint64_t seed, const std::string& group) {
    if (times.empty()) throw InputError("simulation needs at least one time");
    GrowthModelSpec spec = spec_in;
    if (spec.replicates.empty()) spec.replicates = {"1"};
    std::vector<Record> slots;
    for (double t : times) {
        for (const auto& r : spec.replicates) slots.push_back(Record{group, r, t, std::nullopt});
    }
    const auto series = ObservationSeries::from_dataset(Dataset(std::move(slots)), group);
    const auto model = build_model(spec, series);
    const double f0 = constant + scale * eval_g(spec.family, spec.curve, 0.0);
    const std::vector<double> diffuse{f0, scale};
    return simulate(model, series, seed, diffuse);
}

} // namespace growthssm
