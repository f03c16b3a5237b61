#pragma once

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "growthssm/ssm_core.hpp"

namespace growthssm::testing {

/// A random small linear Gaussian model with data, for oracle comparisons.
struct RandomInstance {
    StateSpaceModel model;
    ObservationSeries series;
};

/// m <= 4 states, n <= 12 steps, K <= 3 replicates, roughly a quarter of the
/// values missing. Keeps at least d + 2 observed scalars so the diffuse part is
/// overidentified (a big-variance proxy is only accurate then).
inline RandomInstance random_instance(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick_m(1, 4), pick_n(3, 12), pick_k(1, 3), pick_reg(0, 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto random_matrix = [&](Index r, Index c) {
        MatrixXd a(r, c);
        for (Index i = 0; i < r; ++i) {
            for (Index j = 0; j < c; ++j) a(i, j) = 2.0 * u(rng) - 1.0;
        }
        return a;
    };

    const int m = pick_m(rng);
    const int n = pick_n(rng);
    const int k = pick_k(rng);
    const int n_reg = pick_reg(rng);

    std::vector<Index> diffuse;
    for (Index i = 0; i < m; ++i) {
        if (u(rng) < 0.5) diffuse.push_back(i);
    }
    if (diffuse.empty() && n_reg == 0) diffuse.push_back(0);
    const auto d = static_cast<int>(diffuse.size()) + n_reg;

    std::vector<MatrixXd> ts, qs;
    const bool noiseless_states = u(rng) < 0.25;
    for (int j = 0; j < n; ++j) {
        ts.push_back(MatrixXd::Identity(m, m) + 0.3 * random_matrix(m, m));
        const MatrixXd a = 0.5 * random_matrix(m, m);
        qs.push_back(noiseless_states ? MatrixXd::Zero(m, m) : MatrixXd(a * a.transpose()));
    }
    std::vector<RowVectorXd> zs;
    std::vector<double> hs;
    for (int i = 0; i < k; ++i) {
        zs.push_back(random_matrix(1, m));
        hs.push_back(0.2 + 0.5 * u(rng));
    }
    VectorXd mean = random_matrix(m, 1);
    const MatrixXd b = random_matrix(m, m);
    MatrixXd p0 = b * b.transpose();
    for (Index i : diffuse) {
        p0.row(i).setZero();
        p0.col(i).setZero();
        mean(i) = 0.0;
    }

    std::vector<double> times;
    double t = 0.0;
    for (int j = 0; j < n; ++j) {
        times.push_back(t);
        t += 0.25 + u(rng);
    }
    std::vector<std::vector<ObservationEntry>> entries;
    for (int attempt = 0;; ++attempt) {
        entries.clear();
        int observed = 0;
        for (int j = 0; j < n; ++j) {
            std::vector<ObservationEntry> row;
            for (int i = 0; i < k; ++i) {
                ObservationEntry e;
                e.replicate = std::to_string(i);
                if (u(rng) > 0.25) {
                    e.value = 2.0 * normal(rng);
                    ++observed;
                }
                e.regressors = random_matrix(1, n_reg);
                row.push_back(e);
            }
            entries.push_back(std::move(row));
        }
        if (observed >= d + 2 || attempt > 100) break;
    }
    // Guarantee the floor even when the draws keep coming up short.
    int observed = 0;
    for (auto& row : entries) {
        for (auto& e : row) observed += e.value.has_value();
    }
    for (auto& row : entries) {
        for (auto& e : row) {
            if (observed >= d + 2) break;
            if (!e.value) {
                e.value = normal(rng);
                ++observed;
            }
        }
    }

    DesignFn design = [zs, hs](std::size_t, const ObservationEntry& e) {
        const auto i = static_cast<std::size_t>(std::stoi(e.replicate));
        return ObservationDesign{zs[i], hs[i]};
    };
    TransitionFn transition = [ts, qs](std::size_t j) { return StateTransition{ts[j], qs[j]}; };
    StateSpaceModel model(m, diffuse, mean, p0, n_reg, design, transition);
    ObservationSeries series("g", 0.0, TimeGrid(times), std::move(entries));
    return {std::move(model), std::move(series)};
}

/// max |a - b| / max(1, max |b|) over vectors.
inline double mean_error(const VectorXd& a, const VectorXd& b) {
    if (a.size() == 0) return 0.0;
    return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

/// max |a - b| / max |b| over matrices (0 when both vanish).
inline double cov_error(const MatrixXd& a, const MatrixXd& b) {
    if (a.size() == 0) return 0.0;
    const double scale = b.cwiseAbs().maxCoeff();
    const double diff = (a - b).cwiseAbs().maxCoeff();
    if (scale == 0.0) return diff;
    return diff / scale;
}

} // namespace growthssm::testing
