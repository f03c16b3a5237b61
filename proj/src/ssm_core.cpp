#include "growthssm/ssm_core.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include "growthssm/error.hpp"

namespace growthssm {

TimeGrid::TimeGrid(std::vector<double> times) : times_(std::move(times)) {
    for (std::size_t j = 0; j < times_.size(); ++j) {
        if (!std::isfinite(times_[j])) {
            throw InputError("time grid: non-finite time at index " + std::to_string(j));
        }
        if (j > 0 && !(times_[j] > times_[j - 1])) {
            std::ostringstream os;
            os << "time grid: times not strictly increasing at index " << j << " (" << times_[j - 1]
               << " >= " << times_[j] << ")";
            throw InputError(os.str());
        }
    }
}

Dataset::Dataset(std::vector<Record> records) : records_(std::move(records)) {
    std::set<std::tuple<std::string, std::string, double>> seen;
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto& r = records_[i];
        if (!std::isfinite(r.time)) {
            throw InputError("dataset: non-finite time in record " + std::to_string(i));
        }
        if (r.value && !std::isfinite(*r.value)) {
            throw InputError("dataset: non-finite value in record " + std::to_string(i));
        }
        if (!seen.emplace(r.group, r.replicate, r.time).second) {
            std::ostringstream os;
            os << "dataset: duplicate (group, replicate, time) = (" << r.group << ", " << r.replicate
               << ", " << r.time << ") in record " << i;
            throw InputError(os.str());
        }
    }
}

std::vector<std::string> Dataset::groups() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& r : records_) {
        if (seen.insert(r.group).second) out.push_back(r.group);
    }
    return out;
}

std::vector<std::string> Dataset::replicates(const std::string& group) const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& r : records_) {
        if (r.group == group && seen.insert(r.replicate).second) out.push_back(r.replicate);
    }
    return out;
}

Dataset Dataset::filter_group(const std::string& group) const {
    std::vector<Record> out;
    std::copy_if(records_.begin(), records_.end(), std::back_inserter(out),
                 [&](const Record& r) { return r.group == group; });
    return Dataset(std::move(out));
}

std::size_t Dataset::n_observed() const {
    return static_cast<std::size_t>(
        std::count_if(records_.begin(), records_.end(), [](const Record& r) { return r.value.has_value(); }));
}

ObservationSeries::ObservationSeries(std::string group, double origin, TimeGrid grid,
                                     std::vector<std::vector<ObservationEntry>> entries)
    : group_(std::move(group)), origin_(origin), grid_(std::move(grid)), entries_(std::move(entries)) {
    if (entries_.size() != grid_.size()) {
        throw InputError("observation series: " + std::to_string(entries_.size()) +
                         " entry lists for " + std::to_string(grid_.size()) + " grid times");
    }
    for (std::size_t j = 0; j < entries_.size(); ++j) {
        std::set<std::string> labels;
        for (const auto& e : entries_[j]) {
            if (!labels.insert(e.replicate).second) {
                throw InputError("observation series: replicate '" + e.replicate +
                                 "' appears twice at step " + std::to_string(j));
            }
        }
    }
}

ObservationSeries ObservationSeries::from_dataset(const Dataset& data, const std::string& group) {
    std::map<double, std::vector<ObservationEntry>> by_time;
    for (const auto& r : data.records()) {
        if (r.group != group) continue;
        by_time[r.time].push_back(ObservationEntry{r.replicate, r.value, RowVectorXd()});
    }
    if (by_time.empty()) {
        throw InputError("no records for group '" + group + "'");
    }
    const double origin = by_time.begin()->first;
    std::vector<double> times;
    std::vector<std::vector<ObservationEntry>> entries;
    times.reserve(by_time.size());
    entries.reserve(by_time.size());
    for (auto& [t, e] : by_time) {
        times.push_back(t - origin);
        entries.push_back(std::move(e));
    }
    return ObservationSeries(group, origin, TimeGrid(std::move(times)), std::move(entries));
}

ObservationSeries ObservationSeries::from_dataset(const Dataset& data) {
    const auto groups = data.groups();
    if (groups.size() != 1) {
        throw InputError("dataset has " + std::to_string(groups.size()) +
                         " groups; select one explicitly");
    }
    return from_dataset(data, groups.front());
}

std::vector<std::string> ObservationSeries::replicates() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& step : entries_) {
        for (const auto& e : step) {
            if (seen.insert(e.replicate).second) out.push_back(e.replicate);
        }
    }
    return out;
}

std::size_t ObservationSeries::n_observed() const {
    std::size_t n = 0;
    for (const auto& step : entries_) {
        for (const auto& e : step) n += e.value.has_value() ? 1 : 0;
    }
    return n;
}

std::size_t ObservationSeries::n_entries() const {
    std::size_t n = 0;
    for (const auto& step : entries_) n += step.size();
    return n;
}

Dataset ObservationSeries::to_dataset() const {
    std::vector<Record> records;
    records.reserve(n_entries());
    for (std::size_t j = 0; j < entries_.size(); ++j) {
        for (const auto& e : entries_[j]) {
            records.push_back(Record{group_, e.replicate, absolute_time(j), e.value});
        }
    }
    return Dataset(std::move(records));
}

StateSpaceModel::StateSpaceModel(Index state_dim, std::vector<Index> diffuse_indices,
                                 VectorXd init_mean, MatrixXd init_cov, Index n_regressors,
                                 DesignFn design, TransitionFn transition)
    : state_dim_(state_dim),
      diffuse_(std::move(diffuse_indices)),
      init_mean_(std::move(init_mean)),
      init_cov_(std::move(init_cov)),
      n_regressors_(n_regressors),
      design_(std::move(design)),
      transition_(std::move(transition)) {
    if (state_dim_ <= 0) throw InputError("state dimension must be positive");
    if (n_regressors_ < 0) throw InputError("regressor count must be non-negative");
    if (init_mean_.size() != state_dim_) {
        throw InputError("initial mean has length " + std::to_string(init_mean_.size()) +
                         ", expected " + std::to_string(state_dim_));
    }
    if (init_cov_.rows() != state_dim_ || init_cov_.cols() != state_dim_) {
        throw InputError("initial covariance is not " + std::to_string(state_dim_) + "x" +
                         std::to_string(state_dim_));
    }
    std::set<Index> seen;
    for (Index i : diffuse_) {
        if (i < 0 || i >= state_dim_) throw InputError("diffuse index out of range: " + std::to_string(i));
        if (!seen.insert(i).second) throw InputError("duplicate diffuse index: " + std::to_string(i));
    }
    if (!design_ || !transition_) throw InputError("state space model needs design and transition providers");
}

void check_psd(const MatrixXd& m, const std::string& what) {
    if (m.rows() != m.cols()) throw InputError(what + ": matrix is not square");
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = i + 1; j < m.cols(); ++j) {
            if (std::abs(m(i, j) - m(j, i)) > 1e-12 * scale) {
                std::ostringstream os;
                os << what << ": non-symmetric (entry " << i + 1 << "," << j + 1 << " = " << m(i, j)
                   << " vs " << m(j, i) << ")";
                throw InputError(os.str());
            }
        }
    }
    // Outer-product Cholesky that tolerates zero pivots.
    MatrixXd a = 0.5 * (m + m.transpose());
    const Index n = a.rows();
    for (Index k = 0; k < n; ++k) {
        const double pivot = a(k, k);
        if (pivot < -1e-12 * scale) {
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
            std::ostringstream os;
            os << what << ": not positive semidefinite (min eigenvalue " << es.eigenvalues().minCoeff()
               << ")";
            throw InputError(os.str());
        }
        if (pivot <= 1e-14 * scale) {
            // Zero pivot: the rest of the column must vanish too.
            for (Index i = k + 1; i < n; ++i) {
                if (std::abs(a(i, k)) > 1e-9 * scale) {
                    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (m + m.transpose()),
                                                               Eigen::EigenvaluesOnly);
                    std::ostringstream os;
                    os << what << ": not positive semidefinite (min eigenvalue "
                       << es.eigenvalues().minCoeff() << ")";
                    throw InputError(os.str());
                }
            }
            continue;
        }
        const auto tail = n - k - 1;
        if (tail > 0) {
            VectorXd col = a.col(k).tail(tail) / pivot;
            a.bottomRightCorner(tail, tail).noalias() -= pivot * col * col.transpose();
        }
    }
}

namespace {

std::string at_step(std::size_t j) { return " at step " + std::to_string(j); }

} // namespace

ValidationReport validate_model(const StateSpaceModel& model, const ObservationSeries& series) {
    const Index m = model.state_dim();
    ValidationReport report;
    report.state_dim = m;
    report.diffuse_count = model.diffuse_count();
    report.steps = series.steps();

    for (Index i : model.diffuse_indices()) {
        if (model.init_cov().row(i).cwiseAbs().maxCoeff() != 0.0 ||
            model.init_cov().col(i).cwiseAbs().maxCoeff() != 0.0) {
            throw InputError("initial covariance must be zero on diffuse element " + std::to_string(i + 1));
        }
    }
    check_psd(model.init_cov(), "initial covariance");

    for (std::size_t j = 0; j < series.steps(); ++j) {
        for (const auto& e : series.entries(j)) {
            const auto d = model.design(j, e);
            if (d.z.size() != m) {
                throw InputError("design row has length " + std::to_string(d.z.size()) + ", expected " +
                                 std::to_string(m) + at_step(j));
            }
            if (!d.z.allFinite()) throw InputError("non-finite design row" + at_step(j));
            if (!(d.noise_variance >= 0.0) || !std::isfinite(d.noise_variance)) {
                throw InputError("invalid observation noise variance" + at_step(j));
            }
            if (e.regressors.size() != model.n_regressors()) {
                throw InputError("regressor row has length " + std::to_string(e.regressors.size()) +
                                 ", expected " + std::to_string(model.n_regressors()) + at_step(j));
            }
            ++report.scalars;
            if (e.value) ++report.observed;
        }
        if (j + 1 < series.steps()) {
            const auto tr = model.transition(j);
            if (tr.transition.rows() != m || tr.transition.cols() != m) {
                throw InputError("transition matrix is not " + std::to_string(m) + "x" + std::to_string(m) +
                                 at_step(j));
            }
            if (tr.covariance.rows() != m || tr.covariance.cols() != m) {
                throw InputError("process covariance is not " + std::to_string(m) + "x" + std::to_string(m) +
                                 at_step(j));
            }
            if (!tr.transition.allFinite() || !tr.covariance.allFinite()) {
                throw InputError("non-finite system matrix" + at_step(j));
            }
            try {
                check_psd(tr.covariance, "Q");
            } catch (const InputError& err) {
                std::string msg = err.what();
                if (msg.find("non-symmetric") != std::string::npos) {
                    throw InputError("non-symmetric Q" + at_step(j) + " (" + msg + ")");
                }
                throw InputError(msg + at_step(j));
            }
        }
    }
    return report;
}

namespace {

/// Draws N(0, cov) through an LDLT factor so singular covariances are fine.
VectorXd draw_gaussian(const MatrixXd& cov, std::mt19937_64& rng) {
    const Index n = cov.rows();
    std::normal_distribution<double> normal(0.0, 1.0);
    VectorXd z(n);
    for (Index i = 0; i < n; ++i) z(i) = normal(rng);
    if (cov.isZero(0.0)) return VectorXd::Zero(n);
    Eigen::LDLT<MatrixXd> ldlt(cov);
    VectorXd d = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
    VectorXd x = ldlt.matrixL() * d.cwiseProduct(z);
    return ldlt.transpositionsP().transpose() * x;
}

} // namespace

Dataset simulate(const StateSpaceModel& model, const ObservationSeries& series_template,
                 std::uint64_t seed, std::span<const double> diffuse_values) {
    const auto& diffuse = model.diffuse_indices();
    const auto n_diffuse = static_cast<std::size_t>(diffuse.size());
    if (diffuse_values.size() != n_diffuse + static_cast<std::size_t>(model.n_regressors())) {
        throw InputError("simulate: " + std::to_string(diffuse_values.size()) +
                         " values given for diffuse initial state and coefficients, expected " +
                         std::to_string(n_diffuse + model.n_regressors()));
    }
    for (double v : diffuse_values) {
        if (!std::isfinite(v)) throw InputError("simulate: diffuse initial values must be finite");
    }
    validate_model(model, series_template);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    VectorXd state = model.init_mean() + draw_gaussian(model.init_cov(), rng);
    for (std::size_t k = 0; k < n_diffuse; ++k) state(diffuse[k]) = diffuse_values[k];
    VectorXd beta(model.n_regressors());
    for (Index k = 0; k < model.n_regressors(); ++k) beta(k) = diffuse_values[n_diffuse + k];

    std::vector<Record> records;
    records.reserve(series_template.n_entries());
    for (std::size_t j = 0; j < series_template.steps(); ++j) {
        for (const auto& e : series_template.entries(j)) {
            const auto d = model.design(j, e);
            double y = d.z.dot(state);
            if (beta.size() > 0) y += e.regressors.dot(beta);
            const double noise = normal(rng);
            if (d.noise_variance > 0.0) y += std::sqrt(d.noise_variance) * noise;
            records.push_back(Record{series_template.group(), e.replicate, series_template.absolute_time(j), y});
        }
        if (j + 1 < series_template.steps()) {
            const auto tr = model.transition(j);
            state = tr.transition * state + draw_gaussian(tr.covariance, rng);
        }
    }
    return Dataset(std::move(records));
}

} // namespace growthssm
