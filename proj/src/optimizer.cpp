#include "growthssm/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace growthssm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

class CountingObjective {
  public:
    explicit CountingObjective(const Objective& f) : f_(f) {}

    double operator()(const Eigen::VectorXd& x) {
        ++count_;
        const double v = f_(x);
        return std::isfinite(v) ? v : kInf;
    }
    int count() const { return count_; }

  private:
    const Objective& f_;
    int count_ = 0;
};

struct Simplex {
    std::vector<Eigen::VectorXd> points;
    std::vector<double> values;

    void sort() {
        std::vector<std::size_t> idx(points.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
        std::vector<Eigen::VectorXd> p;
        std::vector<double> v;
        for (auto i : idx) {
            p.push_back(points[i]);
            v.push_back(values[i]);
        }
        points = std::move(p);
        values = std::move(v);
    }

    double diameter() const {
        double d = 0.0;
        for (std::size_t i = 1; i < points.size(); ++i) d = std::max(d, (points[i] - points[0]).lpNorm<Eigen::Infinity>());
        return d;
    }
};

/// One Nelder-Mead descent from an axis-aligned initial simplex.
void descend(CountingObjective& f, Simplex& s, const OptimizeOptions& opt, OptimizeResult& res) {
    const std::size_t n = s.points.size() - 1;
    constexpr double kReflect = 1.0, kExpand = 2.0, kContract = 0.5, kShrink = 0.5;
    while (f.count() < opt.max_evals) {
        s.sort();
        res.trace.push_back(s.values.front());
        ++res.iterations;
        const double spread = s.values.back() - s.values.front();
        if ((std::isfinite(spread) && spread <= opt.ftol && s.diameter() <= std::sqrt(opt.xtol)) ||
            s.diameter() <= opt.xtol) {
            res.converged = true;
            return;
        }
        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) centroid += s.points[i];
        centroid /= static_cast<double>(n);

        const Eigen::VectorXd& worst = s.points[n];
        const Eigen::VectorXd xr = centroid + kReflect * (centroid - worst);
        const double fr = f(xr);
        if (fr < s.values[0]) {
            const Eigen::VectorXd xe = centroid + kExpand * (xr - centroid);
            const double fe = f(xe);
            if (fe < fr) {
                s.points[n] = xe;
                s.values[n] = fe;
            } else {
                s.points[n] = xr;
                s.values[n] = fr;
            }
            continue;
        }
        if (fr < s.values[n - 1]) {
            s.points[n] = xr;
            s.values[n] = fr;
            continue;
        }
        const bool outside = fr < s.values[n];
        const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + kContract * (xr - centroid))
                                           : Eigen::VectorXd(centroid + kContract * (worst - centroid));
        const double fc = f(xc);
        if (fc < std::min(fr, s.values[n])) {
            s.points[n] = xc;
            s.values[n] = fc;
            continue;
        }
        for (std::size_t i = 1; i <= n; ++i) {
            s.points[i] = s.points[0] + kShrink * (s.points[i] - s.points[0]);
            s.values[i] = f(s.points[i]);
        }
    }
}

Simplex initial_simplex(CountingObjective& f, const Eigen::VectorXd& x0, double fx0, double step) {
    Simplex s;
    s.points.push_back(x0);
    s.values.push_back(fx0);
    for (Eigen::Index i = 0; i < x0.size(); ++i) {
        Eigen::VectorXd x = x0;
        x(i) += step;
        s.points.push_back(x);
        s.values.push_back(f(x));
    }
    return s;
}

} // namespace

OptimizeResult nelder_mead(const Objective& objective, const Eigen::VectorXd& x0, const OptimizeOptions& opt) {
    CountingObjective f(objective);
    OptimizeResult res;
    res.x = x0;
    res.value = f(x0);
    if (x0.size() == 0) {
        res.converged = true;
        res.evaluations = f.count();
        res.trace.push_back(res.value);
        return res;
    }
    double step = opt.initial_step;
    for (int round = 0; round <= opt.max_restarts; ++round) {
        Simplex s = initial_simplex(f, res.x, res.value, step);
        const double before = res.value;
        res.converged = false;
        descend(f, s, opt, res);
        s.sort();
        if (s.values.front() < res.value) {
            res.x = s.points.front();
            res.value = s.values.front();
        }
        res.final_size = s.diameter();
        if (round > 0) ++res.restarts;
        // A restart that no longer improves confirms the optimum.
        if (!res.converged || !(before - res.value > opt.ftol)) break;
        step = std::max(0.1 * opt.initial_step, 0.5 * step);
    }
    res.evaluations = f.count();
    return res;
}

namespace {

Eigen::VectorXd fd_gradient(CountingObjective& f, const Eigen::VectorXd& x) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = 1e-5 * std::max(1.0, std::abs(x(i)));
        Eigen::VectorXd xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        g(i) = (f(xp) - f(xm)) / (2.0 * h);
    }
    return g;
}

} // namespace

OptimizeResult quasi_newton_fd(const Objective& objective, const Eigen::VectorXd& x0, const OptimizeOptions& opt) {
    CountingObjective f(objective);
    OptimizeResult res;
    res.x = x0;
    res.value = f(x0);
    const Eigen::Index n = x0.size();
    res.trace.push_back(res.value);
    if (n == 0 || !std::isfinite(res.value)) {
        res.converged = n == 0;
        res.evaluations = f.count();
        return res;
    }
    Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd g = fd_gradient(f, res.x);
    while (f.count() < opt.max_evals) {
        ++res.iterations;
        res.final_size = g.norm();
        if (!g.allFinite()) break;
        if (res.final_size < 1e-6) {
            res.converged = true;
            break;
        }
        Eigen::VectorXd dir = -h_inv * g;
        if (dir.dot(g) >= 0.0) {
            h_inv.setIdentity();
            dir = -g;
        }
        // Limit the step so one iteration moves at most 2 units per coordinate.
        const double max_move = dir.lpNorm<Eigen::Infinity>();
        if (max_move > 2.0) dir *= 2.0 / max_move;
        double t = 1.0;
        double f_new = kInf;
        Eigen::VectorXd x_new;
        while (t > 1e-10 && f.count() < opt.max_evals) {
            x_new = res.x + t * dir;
            f_new = f(x_new);
            if (f_new <= res.value + 1e-4 * t * g.dot(dir)) break;
            t *= 0.5;
        }
        if (!(f_new < res.value)) {
            res.converged = true;
            break;
        }
        const double decrease = res.value - f_new;
        const Eigen::VectorXd g_new = fd_gradient(f, x_new);
        const Eigen::VectorXd s = x_new - res.x;
        const Eigen::VectorXd y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-12) {
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd i_n = Eigen::MatrixXd::Identity(n, n);
            h_inv = (i_n - rho * s * y.transpose()) * h_inv * (i_n - rho * y * s.transpose()) + rho * s * s.transpose();
        }
        res.x = x_new;
        res.value = f_new;
        g = g_new;
        res.trace.push_back(res.value);
        if (decrease <= opt.ftol) {
            res.converged = true;
            break;
        }
    }
    res.evaluations = f.count();
    return res;
}

} // namespace growthssm
