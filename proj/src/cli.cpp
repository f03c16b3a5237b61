#include "growthssm/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "growthssm/error.hpp"
#include "growthssm/svg.hpp"

namespace growthssm::cli {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    if (out.empty()) throw InputError("empty list '" + s + "'");
    return out;
}

struct DataOptions {
    std::string data;
    std::string group;
    double scale = 1.0;
    double grid_step = 0.0;
};

struct ModelOptions {
    std::string family = "logistic";
    std::string mode = "parametric";
    std::string deviations = "none";
};

struct OptOptions {
    std::uint64_t seed = 1;
    int max_evals = 3000;
    int multistart = 5;
    std::string optimizer = "nelder_mead";

    OptimizerConfig config() const {
        OptimizerConfig c;
        c.seed = seed;
        c.max_evals = max_evals;
        c.multistart = multistart;
        c.algorithm = parse_algorithm(optimizer);
        return c;
    }
};

void add_data_options(CLI::App* app, DataOptions& o) {
    app->add_option("--data", o.data, "long-format CSV (group,replicate,time,value)")->required();
    app->add_option("--group", o.group, "group to fit; required when the file has several");
    app->add_option("--scale", o.scale, "multiply values by this factor before fitting")->capture_default_str();
    app->add_option("--grid-step", o.grid_step, "add missing points every STEP time units");
}

void add_opt_options(CLI::App* app, OptOptions& o) {
    app->add_option("--seed", o.seed, "seed of the multistart perturbations")->capture_default_str();
    app->add_option("--max-evals", o.max_evals, "likelihood evaluations per start")->capture_default_str();
    app->add_option("--multistart", o.multistart, "number of starting points")->capture_default_str();
    app->add_option("--optimizer", o.optimizer, "nelder_mead or quasi_newton_fd")->capture_default_str();
}

struct LoadedData {
    Dataset data;
    ObservationSeries series;
};

LoadedData load(const DataOptions& o) {
    Dataset all = read_long_csv(o.data);
    const auto groups = all.groups();
    if (groups.empty()) throw InputError("'" + o.data + "' has no records");
    std::string group = o.group;
    if (group.empty()) {
        if (groups.size() > 1) {
            std::string names;
            for (const auto& g : groups) names += (names.empty() ? "" : ", ") + g;
            throw InputError("'" + o.data + "' has several groups (" + names + "); pick one with --group");
        }
        group = groups.front();
    }
    Dataset data = all.filter_group(group);
    if (data.empty()) throw InputError("group '" + group + "' not found in '" + o.data + "'");
    if (o.scale != 1.0) data = scale_values(data, o.scale);
    if (o.grid_step > 0.0) data = augment_grid(data, o.grid_step);
    auto series = ObservationSeries::from_dataset(data, group);
    return {std::move(data), std::move(series)};
}

GrowthModelSpec base_spec(const ModelOptions& m, const ObservationSeries& series) {
    GrowthModelSpec spec;
    spec.family = parse_family(m.family);
    spec.mode = parse_mode(m.mode);
    spec.deviations = parse_deviations(m.deviations);
    if (spec.deviations == Deviations::random_walk) spec.replicates = series.replicates();
    return spec;
}

void print_summary(const FitArtifact& a, std::ostream& out) {
    const auto& s = a.spec;
    out << std::setprecision(6);
    out << "family " << to_string(s.family) << ", mode " << to_string(s.mode) << ", deviations "
        << to_string(s.deviations) << "\n";
    for (auto k : a.free_params) out << "  " << std::left << std::setw(11) << to_string(k) << ParamSpace::get(s, k) << "\n";
    if (a.constant_scale) {
        out << "  " << std::setw(11) << "constant" << a.constant_scale->constant << "\n";
        out << "  " << std::setw(11) << "scale" << a.constant_scale->scale << "\n";
    }
    out << "loglik " << a.loglik << "  BIC " << a.bic << "  n " << a.n_used << "  converged "
        << (a.convergence.converged ? "yes" : "no") << "\n";
    for (const auto& w : a.warnings) out << "warning: " << w << "\n";
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write '" + path.string() + "'");
    f << text;
}

/// Rates on the augmented grid only: observation times off the grid would
/// break the uniform spacing.
std::optional<RateSummary> grid_rates(const ComponentSeries& mean, std::optional<double> step) {
    ComponentSeries on_grid;
    for (std::size_t i = 0; i < mean.size(); ++i) {
        const double t = mean.times[i];
        if (step && std::abs(t / *step - std::round(t / *step)) > 1e-9 * std::max(1.0, std::abs(t / *step))) continue;
        on_grid.times.push_back(t);
        on_grid.estimate.push_back(mean.estimate[i]);
        on_grid.variance.push_back(mean.variance[i]);
    }
    try {
        return growth_rate(on_grid);
    } catch (const InputError&) {
        return std::nullopt;
    }
}

std::string band_csv(const ComponentSeries& c, const Band& b) {
    std::ostringstream os;
    write_band_csv(b, c.variance, os);
    return os.str();
}

int cmd_fit(const DataOptions& d, const ModelOptions& m, const OptOptions& o, const std::string& out_path,
            std::ostream& out) {
    const auto loaded = load(d);
    const auto spec = base_spec(m, loaded.series);
    const auto result = fit(spec, loaded.series, o.config());
    const auto artifact = make_artifact(result, loaded.data, d.scale);
    if (out_path.empty()) {
        out << dump_artifact(artifact);
    } else {
        write_artifact(artifact, out_path);
        print_summary(artifact, out);
    }
    return ok;
}

int cmd_select(const DataOptions& d, const std::string& families, const std::string& modes,
               const std::string& deviations, const OptOptions& o, const std::string& out_dir, std::ostream& out,
               std::ostream& err) {
    const auto loaded = load(d);
    std::vector<CurveFamily> fams;
    for (const auto& f : split_list(families)) fams.push_back(parse_family(f));
    std::vector<CurveMode> ms;
    for (const auto& s : split_list(modes)) ms.push_back(parse_mode(s));
    const auto base = base_spec(ModelOptions{"logistic", "parametric", deviations}, loaded.series);
    const auto sel = select_model(fams, ms, base, loaded.series, o.config());
    for (const auto& f : sel.failures) err << "WARNING: candidate failed: " << f << "\n";

    fs::create_directories(out_dir);
    std::ostringstream ranking;
    ranking << std::setprecision(10) << "rank,family,mode,n_params,loglik,bic,file\n";
    out << std::setprecision(8);
    for (std::size_t i = 0; i < sel.ranked.size(); ++i) {
        const auto& r = sel.ranked[i];
        const std::string name = to_string(r.spec.family) + "-" + to_string(r.spec.mode) + ".json";
        const auto artifact = make_artifact(r, loaded.data, d.scale);
        write_artifact(artifact, fs::path(out_dir) / name);
        if (i == 0) write_artifact(artifact, fs::path(out_dir) / "winner.json");
        ranking << i + 1 << ',' << to_string(r.spec.family) << ',' << to_string(r.spec.mode) << ',' << r.n_params()
                << ',' << r.loglik << ',' << r.bic << ',' << name << '\n';
        out << i + 1 << ". " << to_string(r.spec.family) << "/" << to_string(r.spec.mode) << "  BIC " << r.bic
            << "  loglik " << r.loglik << "\n";
    }
    write_text(fs::path(out_dir) / "ranking.csv", ranking.str());
    out << "winner: " << to_string(sel.winner().spec.family) << "/" << to_string(sel.winner().spec.mode) << "\n";
    return ok;
}

int cmd_predict(const std::string& artifact_path, double grid_step, double level, const std::string& out_path,
                const std::string& rates_path, std::ostream& out) {
    const auto artifact = read_artifact(artifact_path);
    const std::optional<double> step = grid_step > 0.0 ? std::optional(grid_step) : std::nullopt;
    const auto mean = predict_mean(artifact, step);
    const auto csv = band_csv(mean, confidence_band(mean, level));
    if (out_path.empty()) {
        out << csv;
    } else {
        write_text(out_path, csv);
    }
    if (const auto rates = grid_rates(mean, step)) {
        if (!rates_path.empty()) {
            std::ostringstream os;
            os << std::setprecision(17) << "time,rate_per_step\n";
            for (std::size_t i = 0; i < rates->rate.size(); ++i) os << rates->times[i] << ',' << rates->rate[i] << '\n';
            write_text(rates_path, os.str());
        }
        if (!out_path.empty()) {
            out << std::setprecision(6) << "max growth rate " << rates->max_rate << " per step of " << rates->step
                << " (" << rates->max_rate / rates->step << " per time unit) at time " << rates->time_of_max << "\n";
        }
    } else if (!rates_path.empty()) {
        throw InputError("growth rates need a uniform grid; pass --grid-step");
    }
    return ok;
}

int cmd_compare(const std::string& a_path, const std::string& b_path, double grid_step, double level,
                const std::string& out_path, std::ostream& out) {
    const auto a = read_artifact(a_path);
    const auto b = read_artifact(b_path);
    const std::optional<double> step = grid_step > 0.0 ? std::optional(grid_step) : std::nullopt;
    const auto ma = predict_mean(a, step);
    const auto mb = predict_mean(b, step);
    // Keep the times both curves share.
    ComponentSeries ca, cb;
    std::size_t j = 0;
    for (std::size_t i = 0; i < ma.size(); ++i) {
        while (j < mb.size() && mb.times[j] < ma.times[i] - 1e-9 * std::max(1.0, std::abs(ma.times[i]))) ++j;
        if (j < mb.size() && std::abs(mb.times[j] - ma.times[i]) <= 1e-9 * std::max(1.0, std::abs(ma.times[i]))) {
            ca.times.push_back(ma.times[i]);
            ca.estimate.push_back(ma.estimate[i]);
            ca.variance.push_back(ma.variance[i]);
            cb.times.push_back(ma.times[i]);
            cb.estimate.push_back(mb.estimate[j]);
            cb.variance.push_back(mb.variance[j]);
        }
    }
    if (ca.size() == 0) throw InputError("the two fits share no time points; pass a common --grid-step");
    const auto diff = curve_difference(ca, cb, level);
    const auto csv = band_csv(diff.difference, diff.band);
    if (out_path.empty()) {
        out << csv;
    } else {
        write_text(out_path, csv);
        out << "difference (" << a.group << " - " << b.group << ") at " << ca.size()
            << " shared times; variances added assuming independent fits\n";
    }
    return ok;
}

struct SimOptions {
    ModelOptions model;
    double phi = 1.0, rho = 1.0, nu = 1.0;
    double constant = 0.0, amplitude = 1.0;
    double sigma2_eps = 0.01, sigma2_eta = 0.0, sigma2_dev = 0.0;
    int replicates = 1;
    double t_max = 10.0;
    double grid_step = 0.5;
    std::uint64_t seed = 1;
    std::string group = "sim";
};

int cmd_simulate(const SimOptions& s, const std::string& out_path, std::ostream& out) {
    if (s.replicates < 1) throw InputError("--replicates must be at least 1");
    if (!(s.grid_step > 0.0) || !(s.t_max > 0.0)) throw InputError("--grid-step and --t-max must be positive");
    GrowthModelSpec spec;
    spec.family = parse_family(s.model.family);
    spec.mode = parse_mode(s.model.mode);
    spec.deviations = parse_deviations(s.model.deviations);
    spec.curve = CurveParams{s.phi, s.rho, s.nu};
    validate_params(spec.family, spec.curve);
    spec.noise = NoiseParams{s.sigma2_eps, s.sigma2_eta, s.sigma2_dev};
    for (int r = 1; r <= s.replicates; ++r) spec.replicates.push_back(std::to_string(r));
    std::vector<double> times;
    const auto n = static_cast<long long>(std::floor(s.t_max / s.grid_step + 1e-9));
    for (long long k = 0; k <= n; ++k) times.push_back(static_cast<double>(k) * s.grid_step);
    const auto data = simulate_growth(spec, s.constant, s.amplitude, times, s.seed, s.group);
    if (out_path.empty()) {
        write_long_csv(data, out);
    } else {
        write_long_csv(data, fs::path(out_path));
    }
    return ok;
}

int cmd_plot(const std::string& artifact_path, const std::string& comparison_path, const std::string& out_path,
             std::ostream& out) {
    SvgChart chart;
    if (!artifact_path.empty()) {
        const auto a = read_artifact(artifact_path);
        chart.title = a.group + ": " + to_string(a.spec.family) + " (" + to_string(a.spec.mode) + ")";
        chart.band = a.mean_band;
        chart.lines.push_back(SvgLine{"mean", a.mean.times, a.mean.estimate});
        for (const auto& r : a.data.records()) {
            if (!r.value) continue;
            chart.points.x.push_back(r.time);
            chart.points.y.push_back(*r.value);
        }
    } else {
        std::ifstream in(comparison_path);
        if (!in) throw InputError("cannot open '" + comparison_path + "'");
        std::string line;
        std::getline(in, line);
        Band b;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::stringstream ss(line);
            std::string cell;
            std::vector<double> v;
            while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
            if (v.size() != 5) throw InputError("'" + comparison_path + "' is not a comparison CSV");
            b.times.push_back(v[0]);
            b.estimate.push_back(v[1]);
            b.lower.push_back(v[3]);
            b.upper.push_back(v[4]);
        }
        chart.title = "difference";
        chart.band = b;
        chart.lines.push_back(SvgLine{"difference", b.times, b.estimate});
        if (!b.times.empty()) {
            chart.lines.push_back(SvgLine{"zero", {b.times.front(), b.times.back()}, {0.0, 0.0}, "#999999"});
        }
    }
    const auto svg = render_svg(chart);
    if (out_path.empty()) {
        out << svg;
    } else {
        write_text(out_path, svg);
    }
    return ok;
}

} // namespace

ComponentSeries predict_mean(const FitArtifact& artifact, std::optional<double> grid_step) {
    Dataset data = artifact.data;
    if (grid_step) data = augment_grid(data, *grid_step);
    const auto series = ObservationSeries::from_dataset(data, artifact.group);
    const auto smoothed = diffuse_smoother(build_model(artifact.spec, series), series);
    return extract_component(smoothed, mean_selector(artifact.spec));
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Growth curves as state space models: fit, select, predict, compare, simulate, plot", "growthssm"};
    app.require_subcommand(1);

    DataOptions data;
    ModelOptions model;
    OptOptions opt;
    std::string out_path;

    auto* fit_cmd = app.add_subcommand("fit", "fit one model and write its artifact");
    add_data_options(fit_cmd, data);
    fit_cmd->add_option("--family", model.family, "linear, exponential, logistic, gompertz or richards")->capture_default_str();
    fit_cmd->add_option("--mode", model.mode, "parametric or semiparametric")->capture_default_str();
    fit_cmd->add_option("--deviations", model.deviations, "none or random_walk")->capture_default_str();
    add_opt_options(fit_cmd, opt);
    fit_cmd->add_option("--out", out_path, "artifact path (default: standard output)");

    std::string families = "linear,exponential,logistic,gompertz,richards";
    std::string modes = "parametric,semiparametric";
    std::string sel_dev = "none";
    auto* select_cmd = app.add_subcommand("select", "fit several families and rank them by BIC");
    add_data_options(select_cmd, data);
    select_cmd->add_option("--families", families, "comma-separated families")->capture_default_str();
    select_cmd->add_option("--mode,--modes", modes, "comma-separated modes")->capture_default_str();
    select_cmd->add_option("--deviations", sel_dev, "none or random_walk")->capture_default_str();
    add_opt_options(select_cmd, opt);
    select_cmd->add_option("--out", out_path, "output directory")->required();

    std::string artifact, artifact_b, rates_path, comparison;
    double grid_step = 0.0;
    double level = 0.95;
    auto* predict_cmd = app.add_subcommand("predict", "evaluate a fitted mean curve with its band");
    predict_cmd->add_option("--artifact", artifact, "fit artifact")->required();
    predict_cmd->add_option("--grid-step", grid_step, "add missing points every STEP time units");
    predict_cmd->add_option("--level", level, "band level")->capture_default_str();
    predict_cmd->add_option("--rates", rates_path, "also write per-step growth rates here");
    predict_cmd->add_option("--out", out_path, "CSV path (default: standard output)");

    auto* compare_cmd = app.add_subcommand("compare", "difference of two fitted mean curves");
    compare_cmd->add_option("--a", artifact, "first fit artifact")->required();
    compare_cmd->add_option("--b", artifact_b, "second fit artifact")->required();
    compare_cmd->add_option("--grid-step", grid_step, "common grid for both curves");
    compare_cmd->add_option("--level", level, "band level")->capture_default_str();
    compare_cmd->add_option("--out", out_path, "CSV path (default: standard output)");

    SimOptions sim;
    auto* sim_cmd = app.add_subcommand("simulate", "simulate replicate curves from a model");
    sim_cmd->add_option("--family", sim.model.family)->capture_default_str();
    sim_cmd->add_option("--mode", sim.model.mode)->capture_default_str();
    sim_cmd->add_option("--deviations", sim.model.deviations)->capture_default_str();
    sim_cmd->add_option("--phi", sim.phi)->capture_default_str();
    sim_cmd->add_option("--rho", sim.rho)->capture_default_str();
    sim_cmd->add_option("--nu", sim.nu)->capture_default_str();
    sim_cmd->add_option("--constant", sim.constant)->capture_default_str();
    sim_cmd->add_option("--amplitude", sim.amplitude, "scale of the curve")->capture_default_str();
    sim_cmd->add_option("--sigma2-eps", sim.sigma2_eps)->capture_default_str();
    sim_cmd->add_option("--sigma2-eta", sim.sigma2_eta)->capture_default_str();
    sim_cmd->add_option("--sigma2-dev", sim.sigma2_dev)->capture_default_str();
    sim_cmd->add_option("--replicates", sim.replicates)->capture_default_str();
    sim_cmd->add_option("--t-max", sim.t_max)->capture_default_str();
    sim_cmd->add_option("--grid-step", sim.grid_step)->capture_default_str();
    sim_cmd->add_option("--seed", sim.seed)->capture_default_str();
    sim_cmd->add_option("--group", sim.group)->capture_default_str();
    sim_cmd->add_option("--out", out_path, "CSV path (default: standard output)");

    auto* plot_cmd = app.add_subcommand("plot", "SVG chart of a fit or a comparison");
    auto* plot_art = plot_cmd->add_option("--artifact", artifact, "fit artifact");
    auto* plot_cmp = plot_cmd->add_option("--comparison", comparison, "CSV written by compare");
    plot_art->excludes(plot_cmp);
    plot_cmd->add_option("--out", out_path, "SVG path (default: standard output)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return ok;
    } catch (const CLI::ParseError& e) {
        err << "ERROR: " << e.what() << "\n";
        return usage_error;
    }

    try {
        if (fit_cmd->parsed()) return cmd_fit(data, model, opt, out_path, out);
        if (select_cmd->parsed()) return cmd_select(data, families, modes, sel_dev, opt, out_path, out, err);
        if (predict_cmd->parsed()) return cmd_predict(artifact, grid_step, level, out_path, rates_path, out);
        if (compare_cmd->parsed()) return cmd_compare(artifact, artifact_b, grid_step, level, out_path, out);
        if (sim_cmd->parsed()) return cmd_simulate(sim, out_path, out);
        if (plot_cmd->parsed()) {
            if (artifact.empty() && comparison.empty()) throw InputError("plot needs --artifact or --comparison");
            return cmd_plot(artifact, comparison, out_path, out);
        }
    } catch (const InputError& e) {
        err << "ERROR: " << e.what() << "\n";
        return usage_error;
    } catch (const std::exception& e) {
        err << "ERROR: " << e.what() << "\n";
        return numerical_failure;
    }
    return usage_error;
}

} // namespace growthssm::cli
