#include "growthssm/estimation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <future>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "growthssm/error.hpp"

namespace growthssm {

namespace {

constexpr double kLogNuMin = -6.907755278982137;  // log(1e-3)
constexpr double kLogNuMax = 6.907755278982137;   // log(1e3)
// Internal coordinate that puts a variance at (numerically) its floor.
constexpr double kFloorCoordinate = -30.0;

bool is_variance(ParamKind k) {
    return k == ParamKind::sigma2_eps || k == ParamKind::sigma2_eta || k == ParamKind::sigma2_dev;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

} // namespace

std::string to_string(ParamKind kind) {
    switch (kind) {
    case ParamKind::phi: return "phi";
    case ParamKind::rho: return "rho";
    case ParamKind::nu: return "nu";
    case ParamKind::sigma2_eps: return "sigma2_eps";
    case ParamKind::sigma2_eta: return "sigma2_eta";
    case ParamKind::sigma2_dev: return "sigma2_dev";
    }
    return "unknown";
}

ParamKind parse_param(std::string_view name) {
    const auto s = lower(name);
    for (auto k : {ParamKind::phi, ParamKind::rho, ParamKind::nu, ParamKind::sigma2_eps, ParamKind::sigma2_eta,
                   ParamKind::sigma2_dev}) {
        if (s == to_string(k)) return k;
    }
    throw InputError("unknown parameter '" + std::string(name) + "'");
}

std::string to_string(Algorithm algorithm) {
    return algorithm == Algorithm::nelder_mead ? "nelder_mead" : "quasi_newton_fd";
}

Algorithm parse_algorithm(std::string_view name) {
    const auto s = lower(name);
    if (s == "nelder_mead" || s == "nelder-mead") return Algorithm::nelder_mead;
    if (s == "quasi_newton_fd" || s == "quasi-newton" || s == "bfgs") return Algorithm::quasi_newton_fd;
    throw InputError("unknown optimizer '" + std::string(name) + "'");
}

ParamSpace ParamSpace::for_spec(const GrowthModelSpec& spec, const std::vector<ParamKind>& fixed) {
    std::vector<ParamKind> free;
    auto add = [&](bool cond, ParamKind k) {
        if (cond && std::find(fixed.begin(), fixed.end(), k) == fixed.end()) free.push_back(k);
    };
    add(uses_phi(spec.family), ParamKind::phi);
    add(uses_rho(spec.family), ParamKind::rho);
    add(uses_nu(spec.family), ParamKind::nu);
    add(true, ParamKind::sigma2_eps);
    add(spec.mode == CurveMode::semiparametric, ParamKind::sigma2_eta);
    add(spec.deviations == Deviations::random_walk && spec.replicate_count() >= 2, ParamKind::sigma2_dev);
    return ParamSpace(std::move(free));
}

bool ParamSpace::contains(ParamKind kind) const {
    return std::find(free_.begin(), free_.end(), kind) != free_.end();
}

double ParamSpace::to_internal(ParamKind kind, double value) {
    switch (kind) {
    case ParamKind::phi:
    case ParamKind::rho: return std::log(value);
    case ParamKind::nu: {
        const double u = (std::log(std::clamp(value, kNuMin, kNuMax)) - kLogNuMin) / (kLogNuMax - kLogNuMin);
        const double uc = std::clamp(u, 1e-15, 1.0 - 1e-15);
        return std::log(uc / (1.0 - uc));
    }
    default: {
        const double excess = value - kVarianceFloor;
        return excess > 0.0 ? std::log(excess) : kFloorCoordinate;
    }
    }
}

double ParamSpace::from_internal(ParamKind kind, double x) {
    switch (kind) {
    case ParamKind::phi:
    case ParamKind::rho: return std::exp(x);
    case ParamKind::nu: {
        const double u = 1.0 / (1.0 + std::exp(-x));
        return std::exp(kLogNuMin + (kLogNuMax - kLogNuMin) * u);
    }
    default: return kVarianceFloor + std::exp(x);
    }
}

double ParamSpace::get(const GrowthModelSpec& spec, ParamKind kind) {
    switch (kind) {
    case ParamKind::phi: return spec.curve.phi;
    case ParamKind::rho: return spec.curve.rho;
    case ParamKind::nu: return spec.curve.nu;
    case ParamKind::sigma2_eps: return spec.noise.sigma2_eps;
    case ParamKind::sigma2_eta: return spec.noise.sigma2_eta;
    case ParamKind::sigma2_dev: return spec.noise.sigma2_dev;
    }
    return 0.0;
}

void ParamSpace::set(GrowthModelSpec& spec, ParamKind kind, double value) {
    switch (kind) {
    case ParamKind::phi: spec.curve.phi = value; break;
    case ParamKind::rho: spec.curve.rho = value; break;
    case ParamKind::nu: spec.curve.nu = value; break;
    case ParamKind::sigma2_eps: spec.noise.sigma2_eps = value; break;
    case ParamKind::sigma2_eta: spec.noise.sigma2_eta = value; break;
    case ParamKind::sigma2_dev: spec.noise.sigma2_dev = value; break;
    }
}

VectorXd ParamSpace::pack(const GrowthModelSpec& spec) const {
    VectorXd x(static_cast<Index>(free_.size()));
    for (std::size_t i = 0; i < free_.size(); ++i) x(static_cast<Index>(i)) = to_internal(free_[i], get(spec, free_[i]));
    return x;
}

GrowthModelSpec ParamSpace::unpack(const GrowthModelSpec& base, const VectorXd& x) const {
    GrowthModelSpec spec = base;
    for (std::size_t i = 0; i < free_.size(); ++i) set(spec, free_[i], from_internal(free_[i], x(static_cast<Index>(i))));
    return spec;
}

VectorXd ParamSpace::values(const GrowthModelSpec& spec) const {
    VectorXd v(static_cast<Index>(free_.size()));
    for (std::size_t i = 0; i < free_.size(); ++i) v(static_cast<Index>(i)) = get(spec, free_[i]);
    return v;
}

namespace {

struct PooledCurve {
    std::vector<double> times;
    std::vector<double> values;
};

PooledCurve pooled_means(const ObservationSeries& series) {
    PooledCurve c;
    for (std::size_t j = 0; j < series.steps(); ++j) {
        double sum = 0.0;
        int n = 0;
        for (const auto& e : series.entries(j)) {
            if (e.value) {
                sum += *e.value;
                ++n;
            }
        }
        if (n > 0) {
            c.times.push_back(series.grid()[j]);
            c.values.push_back(sum / n);
        }
    }
    return c;
}

double variance_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return ss / static_cast<double>(v.size() - 1);
}

} // namespace

GrowthModelSpec initial_values(const GrowthModelSpec& spec, const ObservationSeries& series) {
    if (series.n_observed() < 5) {
        throw InputError("at least 5 observed values are needed for starting values, got " +
                         std::to_string(series.n_observed()));
    }
    GrowthModelSpec out = spec;
    const PooledCurve pooled = pooled_means(series);
    const auto np = pooled.times.size();
    const double span = std::max(pooled.times.back() - pooled.times.front(), 1e-8);
    const auto [lo, hi] = std::minmax_element(pooled.values.begin(), pooled.values.end());
    const double range = *hi - *lo;

    // Steepest pooled slope and where it happens.
    double max_slope = 0.0;
    double t_steep = pooled.times.front();
    for (std::size_t j = 0; j + 1 < np; ++j) {
        const std::size_t a = j == 0 ? 0 : j - 1;
        const std::size_t b = std::min(np - 1, j + 1);
        if (b == a) continue;
        const double s = (pooled.values[b] - pooled.values[a]) / (pooled.times[b] - pooled.times[a]);
        if (std::abs(s) > std::abs(max_slope)) {
            max_slope = s;
            t_steep = pooled.times[j];
        }
    }
    const double rel_slope = range > 0.0 ? std::abs(max_slope) / range : 0.0;

    double rho = 1.0 / span;
    switch (spec.family) {
    case CurveFamily::linear: break;
    case CurveFamily::exponential: rho = std::max(rel_slope, 1.0 / span); break;
    case CurveFamily::logistic:
    case CurveFamily::richards: rho = std::max(4.0 * rel_slope, 1.0 / span); break;
    case CurveFamily::gompertz: rho = std::max(std::exp(1.0) * rel_slope, 1.0 / span); break;
    }
    out.curve.rho = rho;
    // Inflection of the logistic and Gompertz shapes sits at log(phi) / rho.
    out.curve.phi = std::clamp(std::exp(rho * t_steep), 1e-2, 1e6);
    out.curve.nu = 1.0;

    // Noise level from second differences within each replicate.
    std::map<std::string, std::vector<double>> per_rep;
    for (std::size_t j = 0; j < series.steps(); ++j) {
        for (const auto& e : series.entries(j)) {
            if (e.value) per_rep[e.replicate].push_back(*e.value);
        }
    }
    double ss = 0.0;
    std::size_t cnt = 0;
    std::vector<double> all;
    for (const auto& [label, ys] : per_rep) {
        all.insert(all.end(), ys.begin(), ys.end());
        for (std::size_t i = 1; i + 1 < ys.size(); ++i) {
            const double d2 = ys[i + 1] - 2.0 * ys[i] + ys[i - 1];
            ss += d2 * d2;
            ++cnt;
        }
    }
    const double total_var = std::max(variance_of(all), 1e-12);
    const double eps = cnt > 0 ? ss / (6.0 * static_cast<double>(cnt)) : 0.1 * total_var;
    out.noise.sigma2_eps = std::max(eps, 1e-6 * total_var);
    out.noise.sigma2_eta = spec.mode == CurveMode::semiparametric ? 1.0 : 0.0;

    if (spec.deviations == Deviations::random_walk && spec.replicate_count() >= 2) {
        // Spread between replicates at the last time with at least two values.
        double dev = 0.0;
        for (std::size_t j = series.steps(); j-- > 0;) {
            std::vector<double> vals;
            for (const auto& e : series.entries(j)) {
                if (e.value) vals.push_back(*e.value);
            }
            if (vals.size() >= 2) {
                dev = variance_of(vals) / std::max(series.grid()[j], 1e-8);
                break;
            }
        }
        out.noise.sigma2_dev = std::max(dev, 1e-6 * total_var / span);
    }
    return out;
}

double marginal_loglik(const GrowthModelSpec& spec, const ObservationSeries& series) {
    const auto model = build_model(spec, series);
    FilterOptions opts;
    opts.keep_innovations = false;
    opts.keep_states = false;
    return diffuse_filter(model, series, opts).marginal_loglik;
}

double bic(double loglik, std::size_t n_params, std::size_t n_used, int d) {
    if (static_cast<long>(n_used) <= d) {
        throw InputError("BIC needs more observations (" + std::to_string(n_used) + ") than diffuse elements (" +
                         std::to_string(d) + ")");
    }
    return -2.0 * loglik + static_cast<double>(n_params) * std::log(static_cast<double>(n_used) - d);
}

double bic(const FitResult& fit) { return bic(fit.loglik, fit.n_params(), fit.n_used, fit.d); }

namespace {

struct RunOutcome {
    OptimizeResult opt;
};

OptimizeResult optimize(const Objective& f, const VectorXd& x0, const OptimizerConfig& cfg, int budget) {
    OptimizeOptions oo;
    oo.max_evals = budget;
    oo.ftol = cfg.tolerance;
    return cfg.algorithm == Algorithm::nelder_mead ? nelder_mead(f, x0, oo) : quasi_newton_fd(f, x0, oo);
}

/// Tries each variance coordinate at its floor; keeps and re-polishes any that
/// do at least as well. Optimizers in log coordinates stall short of a boundary.
OptimizeResult polish_boundaries(const Objective& f, const ParamSpace& space, OptimizeResult best,
                                 const OptimizerConfig& cfg, int budget) {
    for (std::size_t i = 0; i < space.size(); ++i) {
        if (!is_variance(space.params()[i])) continue;
        const auto idx = static_cast<Index>(i);
        if (best.x(idx) <= kFloorCoordinate) continue;
        VectorXd x = best.x;
        x(idx) = kFloorCoordinate;
        const double v = f(x);
        if (!(v <= best.value + cfg.tolerance)) continue;
        OptimizeResult again = optimize(f, x, cfg, budget);
        again.evaluations += best.evaluations + 1;
        again.iterations += best.iterations;
        again.restarts += best.restarts;
        if (again.value <= v) {
            std::vector<double> trace = best.trace;
            for (double t : again.trace) trace.push_back(std::min(t, trace.empty() ? t : trace.back()));
            again.trace = std::move(trace);
            best = std::move(again);
        } else {
            best.x = x;
            best.value = v;
            best.trace.push_back(std::min(v, best.trace.empty() ? v : best.trace.back()));
        }
    }
    return best;
}

} // namespace

FitResult fit(const GrowthModelSpec& spec_in, const ObservationSeries& series, const OptimizerConfig& cfg) {
    if (cfg.max_evals <= 0) throw InputError("max_evals must be positive");
    if (cfg.multistart < 1) throw InputError("multistart must be at least 1");
    validate_params(spec_in.family, spec_in.curve);

    GrowthModelSpec spec = spec_in;
    if (spec.deviations == Deviations::random_walk && spec.replicates.empty()) spec.replicates = series.replicates();

    const ParamSpace space = ParamSpace::for_spec(spec, cfg.fixed);
    const GrowthModelSpec heuristic = space.size() > 0 ? initial_values(spec, series) : spec;

    // Fixed parameters keep the caller's values.
    GrowthModelSpec start = spec;
    for (auto k : space.params()) ParamSpace::set(start, k, ParamSpace::get(cfg.start_from_spec ? spec : heuristic, k));

    const Objective objective = [&](const VectorXd& x) {
        try {
            const double ll = marginal_loglik(space.unpack(start, x), series);
            return std::isfinite(ll) ? -ll : std::numeric_limits<double>::infinity();
        } catch (const Error&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    std::vector<VectorXd> starts;
    const VectorXd x0 = space.pack(start);
    starts.push_back(x0);
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int s = 1; s < cfg.multistart && space.size() > 0; ++s) {
        VectorXd x = x0;
        if (s == 1 && space.contains(ParamKind::phi)) {
            // phi = 1 with the heuristic rho.
            for (std::size_t i = 0; i < space.size(); ++i) {
                if (space.params()[i] == ParamKind::phi) x(static_cast<Index>(i)) = 0.0;
            }
        } else {
            for (Index i = 0; i < x.size(); ++i) x(i) += normal(rng);
        }
        starts.push_back(x);
    }

    const int budget = cfg.max_evals;
    ConvergenceReport report;
    std::optional<OptimizeResult> best;
    for (const auto& x : starts) {
        OptimizeResult r = optimize(objective, x, cfg, budget);
        r = polish_boundaries(objective, space, std::move(r), cfg, budget);
        report.start_logliks.push_back(-r.value);
        report.evaluations += r.evaluations;
        if (!best || r.value < best->value) best = std::move(r);
    }
    if (!best || !std::isfinite(best->value)) {
        throw NumericalError("log-likelihood is not finite at any starting point");
    }

    FitResult out;
    out.spec = space.unpack(start, best->x);
    out.space = space;
    out.warnings = spec_warnings(out.spec);
    report.iterations = best->iterations;
    report.restarts = best->restarts;
    report.final_size = best->final_size;
    report.converged = best->converged;
    for (double v : best->trace) {
        if (std::isfinite(v)) report.trace.push_back(-v);
    }
    const auto [lo, hi] = std::minmax_element(report.start_logliks.begin(), report.start_logliks.end());
    report.multimodal = (*hi - *lo) > 1e-4;
    if (!report.converged) out.warnings.push_back("optimizer stopped at max_evals before converging");
    out.convergence = std::move(report);

    const auto model = build_model(out.spec, series);
    const SmootherResult smoothed = diffuse_smoother(model, series);
    out.loglik = smoothed.filter.marginal_loglik;
    out.n_used = smoothed.filter.n_used;
    out.d = smoothed.filter.d_required;
    out.bic = bic(out.loglik, out.n_params(), out.n_used, out.d);
    out.mean = extract_component(smoothed, mean_selector(out.spec));
    if (out.spec.deviations == Deviations::random_walk) {
        for (Index i = 0; i < out.spec.replicate_count(); ++i) {
            out.deviations.push_back(extract_component(smoothed, deviation_selector(out.spec, i)));
        }
    }
    if (out.spec.mode == CurveMode::parametric) out.constant_scale = recover_constant_scale(smoothed, out.spec);
    return out;
}

SelectionResult select_model(const std::vector<CurveFamily>& families, const std::vector<CurveMode>& modes,
                             const GrowthModelSpec& base, const ObservationSeries& series,
                             const OptimizerConfig& cfg) {
    std::vector<Candidate> candidates;
    for (auto f : families) {
        for (auto m : modes) candidates.push_back(Candidate{f, m});
    }
    if (candidates.empty()) throw InputError("model selection needs at least one candidate");

    std::vector<std::future<FitResult>> jobs;
    jobs.reserve(candidates.size());
    for (const auto& c : candidates) {
        GrowthModelSpec spec = base;
        spec.family = c.family;
        spec.mode = c.mode;
        spec.curve = CurveParams{};
        jobs.push_back(std::async(std::launch::async, [spec, &series, cfg] { return fit(spec, series, cfg); }));
    }
    SelectionResult out;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        try {
            out.ranked.push_back(jobs[i].get());
        } catch (const Error& e) {
            out.failures.push_back(to_string(candidates[i].family) + "/" + to_string(candidates[i].mode) + ": " +
                                   e.what());
        }
    }
    if (out.ranked.empty()) {
        std::ostringstream os;
        os << "all " << candidates.size() << " candidates failed";
        for (const auto& f : out.failures) os << "; " << f;
        throw NumericalError(os.str());
    }
    std::stable_sort(out.ranked.begin(), out.ranked.end(),
                     [](const FitResult& a, const FitResult& b) { return a.bic < b.bic; });
    return out;
}

} // namespace growthssm
