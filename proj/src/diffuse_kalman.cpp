#include "growthssm/diffuse_kalman.hpp"

#include <cmath>
#include <sstream>

#include "growthssm/error.hpp"

namespace growthssm {

// The diffuse elements delta (diffuse initial states, then regression
// coefficients) are carried as extra columns: the state is a + A delta + xi with
// xi ~ N(0, P) and P always finite. Each observed scalar contributes
//   y - z a = w delta + noise,  w = z A + x,  Var(noise) = F = z P z' + h,
// so the data's information about delta accumulates additively. A scalar with
// F = 0 pins w delta exactly. Nothing is collapsed during filtering, which keeps
// weakly identified diffuse directions (tiny early increments of g) accurate.

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
// Finite innovation variance at or below this carries no noise.
constexpr double kSingularTol = 1e-14;
// A diffuse row adds a new direction when its residual exceeds this fraction
// of its norm.
constexpr double kRankTol = 1e-10;
// Diagonal entries of a covariance in [-kClampTol, 0) are rounding noise.
constexpr double kClampTol = 1e-10;

enum class UpdateKind { missing, skipped, constraint, regular };

struct ScalarTrace {
    UpdateKind kind = UpdateKind::missing;
    RowVectorXd z;
    double e = 0.0;
    RowVectorXd w;
    double f = 0.0;
    VectorXd m;
};

struct StepTrace {
    VectorXd a;
    MatrixXd a_diffuse;
    MatrixXd p;
    std::vector<ScalarTrace> scalars;
    MatrixXd transition;  // to the next step; empty at the last step
};

struct DiffuseSolution {
    VectorXd mean;
    MatrixXd cov;
    /// Residual quadratic form after estimating delta.
    double quad = 0.0;
    double log_det = 0.0;
    /// Cholesky factor of the information, and the basis it lives in.
    Eigen::LLT<MatrixXd> llt;
    MatrixXd basis;

    /// w Cov w', as a squared norm so it cannot go negative.
    double variance_of(const RowVectorXd& w) const {
        if (basis.cols() == 0) return 0.0;
        const VectorXd u = llt.matrixL().solve(basis.transpose() * w.transpose());
        return u.squaredNorm();
    }
};

/// What the observations so far say about delta.
class DiffuseInfo {
  public:
    explicit DiffuseInfo(Index d)
        : d_(d), info_(MatrixXd::Zero(d, d)), score_(VectorXd::Zero(d)), particular_(VectorXd::Zero(d)),
          gram_(MatrixXd::Zero(d, d)) {}

    Index dim() const { return d_; }
    Index rank() const { return static_cast<Index>(span_.size()); }
    Index n_constraints() const { return static_cast<Index>(constraints_.size()); }

    /// Adds the design row x of delta to the spanned directions; returns the
    /// squared norm of its new part, or 0 when it lies (numerically) in the
    /// span already. The filtered rows w span the same space.
    double extend_span(const RowVectorXd& w) {
        gram_.noalias() += w.transpose() * w;
        const double norm = w.norm();
        if (norm == 0.0 || rank() == d_) return 0.0;
        VectorXd r = w.transpose();
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& q : span_) r -= q * q.dot(r);
        }
        const double rn = r.norm();
        if (rn <= kRankTol * norm) return 0.0;
        span_.push_back(r / rn);
        solved_ = false;
        return rn * rn;
    }

    void add_regular(const RowVectorXd& w, double e, double f) {
        info_.noalias() += w.transpose() * w / f;
        score_.noalias() += w.transpose() * (e / f);
        quad_ += e * e / f;
        log_f_ += std::log(f);
        ++n_regular_;
        solved_ = false;
    }

    /// Records w delta = e exactly; false when w adds nothing to earlier constraints.
    bool add_constraint(const RowVectorXd& w, double e) {
        const double norm = w.norm();
        if (norm == 0.0) return false;
        VectorXd r = w.transpose();
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& q : constraints_) r -= q * q.dot(r);
        }
        const double rn = r.norm();
        if (rn <= kRankTol * norm) return false;
        const VectorXd q = r / rn;
        // q is orthogonal to earlier rows, so moving along it keeps them satisfied.
        particular_ += q * ((e - w.dot(particular_)) / w.dot(q));
        log_det_constraints_ += 2.0 * std::log(rn);
        constraints_.push_back(q);
        solved_ = false;
        return true;
    }

    /// Posterior of delta within the spanned directions.
    const DiffuseSolution& solve() {
        if (solved_) return solution_;
        const Index k = rank();
        const Index r = n_constraints();
        MatrixXd u(d_, k);
        for (Index i = 0; i < k; ++i) u.col(i) = span_[static_cast<std::size_t>(i)];
        MatrixXd free_dirs = u;
        if (r > 0) {
            MatrixXd cq(k, r);
            for (Index i = 0; i < r; ++i) cq.col(i) = u.transpose() * constraints_[static_cast<std::size_t>(i)];
            const Eigen::HouseholderQR<MatrixXd> qr(cq);
            const MatrixXd q_full = qr.householderQ() * MatrixXd::Identity(k, k);
            free_dirs = u * q_full.rightCols(k - r);
        }
        const VectorXd& p = particular_;
        const MatrixXd s_free = free_dirs.transpose() * info_ * free_dirs;
        const VectorXd sp = info_ * p;
        const VectorXd b = free_dirs.transpose() * (score_ - sp);
        DiffuseSolution& sol = solution_;
        sol.basis = free_dirs;
        sol.quad = quad_ - 2.0 * score_.dot(p) + p.dot(sp);
        sol.log_det = 0.0;
        sol.mean = p;
        sol.cov = MatrixXd::Zero(d_, d_);
        if (free_dirs.cols() > 0) {
            sol.llt.compute(s_free);
            if (sol.llt.info() != Eigen::Success) {
                throw NumericalError("information about the diffuse elements is numerically singular");
            }
            const VectorXd coef = sol.llt.solve(b);
            sol.mean.noalias() += free_dirs * coef;
            sol.quad -= b.dot(coef);
            sol.log_det = 2.0 * sol.llt.matrixLLT().diagonal().array().log().sum();
            const MatrixXd half = sol.llt.matrixL().solve(free_dirs.transpose());
            sol.cov.noalias() = half.transpose() * half;
        } else {
            sol.llt.compute(MatrixXd::Zero(0, 0));
        }
        solved_ = true;
        return sol;
    }

    /// log of the integral over delta of p(y | delta), for full rank.
    double integrated_loglik() {
        const auto& sol = solve();
        const auto free = static_cast<double>(d_ - n_constraints());
        return -0.5 * ((static_cast<double>(n_regular_) - free) * kLog2Pi + log_f_ + sol.quad + sol.log_det +
                       log_det_constraints_);
    }

    const MatrixXd& gram() const { return gram_; }

  private:
    Index d_;
    MatrixXd info_;
    VectorXd score_;
    double quad_ = 0.0;
    double log_f_ = 0.0;
    long n_regular_ = 0;
    std::vector<VectorXd> span_;
    std::vector<VectorXd> constraints_;
    VectorXd particular_;
    double log_det_constraints_ = 0.0;
    MatrixXd gram_;
    DiffuseSolution solution_;
    bool solved_ = false;
};

void symmetrize(MatrixXd& p) { p = 0.5 * (p + p.transpose()).eval(); }

void check_diagonal(MatrixXd& p, std::size_t step, const char* what) {
    for (Index i = 0; i < p.rows(); ++i) {
        const double d = p(i, i);
        if (d < -kClampTol || !std::isfinite(d)) {
            std::ostringstream os;
            os << what << " has invalid diagonal entry " << d << " at step " << step;
            throw NumericalError(os.str());
        }
        if (d < 0.0) p(i, i) = 0.0;
    }
}

/// M = P z' exploiting the few non-zeros of z.
void times_design(const MatrixXd& p, const RowVectorXd& z, VectorXd& out) {
    out.setZero(p.rows());
    for (Index k = 0; k < z.size(); ++k) {
        if (z(k) != 0.0) out.noalias() += z(k) * p.col(k);
    }
}

struct FilterRun {
    FilterResult result;
    std::vector<StepTrace> trace;
    std::optional<DiffuseSolution> diffuse;
};

std::string insufficient_message(Index absorbed, Index required) {
    std::ostringstream os;
    os << "insufficient data: the observations identify " << absorbed << " of " << required
       << " diffuse dimensions";
    return os.str();
}

FilterRun run_filter(const StateSpaceModel& model, const ObservationSeries& series, const FilterOptions& options,
                     bool keep_trace) {
    const Index m = model.state_dim();
    const Index k = model.n_regressors();
    const Index d_state = static_cast<Index>(model.diffuse_indices().size());
    const Index d = model.diffuse_count();

    FilterRun run;
    FilterResult& res = run.result;
    res.d_required = static_cast<int>(d);
    if (keep_trace) run.trace.resize(series.steps());

    VectorXd a = model.init_mean();
    MatrixXd p = model.init_cov();
    MatrixXd big_a = MatrixXd::Zero(m, d);
    // Response of the state to the diffuse state elements before any update;
    // its rows give the design of delta, which fixes the Gram matrix.
    MatrixXd raw = MatrixXd::Zero(m, d_state);
    for (Index c = 0; c < d_state; ++c) {
        const Index i = model.diffuse_indices()[static_cast<std::size_t>(c)];
        a(i) = 0.0;
        big_a(i, c) = 1.0;
        raw(i, c) = 1.0;
    }
    DiffuseInfo info(d);

    VectorXd mvec;
    RowVectorXd w(d);
    RowVectorXd x(d);
    MatrixXd tmp;

    for (std::size_t j = 0; j < series.steps(); ++j) {
        StepTrace* st = keep_trace ? &run.trace[j] : nullptr;
        if (st) {
            st->a = a;
            st->a_diffuse = big_a;
            st->p = p;
            st->scalars.resize(series.entries(j).size());
        }
        const auto entries = series.entries(j);
        for (std::size_t i = 0; i < entries.size(); ++i) {
            const auto& entry = entries[i];
            ScalarTrace* sc = st ? &st->scalars[i] : nullptr;
            if (!entry.value) continue;
            const auto des = model.design(j, entry);
            if (des.z.size() != m) {
                throw InputError("design row has length " + std::to_string(des.z.size()) + ", expected " +
                                 std::to_string(m) + " at step " + std::to_string(j));
            }
            if (k > 0 && entry.regressors.size() != k) {
                throw InputError("regressor row has wrong length at step " + std::to_string(j));
            }
            ++res.n_used;
            const RowVectorXd& z = des.z;
            const double e = *entry.value - z.dot(a);
            if (d > 0) {
                w.noalias() = z * big_a;
                x.head(d_state).noalias() = z * raw;
                if (k > 0) {
                    w.tail(k) += entry.regressors;
                    x.tail(k) = entry.regressors;
                }
            }
            times_design(p, z, mvec);
            const double f = z.dot(mvec) + des.noise_variance;

            // Sequential likelihood: innovations given everything seen so far,
            // skipping the scalars that first reveal a diffuse direction.
            const bool diffuse_before = info.rank() < d;
            const double new_dir = d > 0 ? info.extend_span(x) : 0.0;
            ScalarInnovation inn;
            inn.step = j;
            inn.entry = i;
            bool singular = false;
            if (new_dir > 0.0) {
                inn.absorbed = true;
                inn.innovation = e;
                inn.variance = f;
                inn.diffuse_variance = new_dir;
                ++res.d_absorbed;
            } else {
                double v = e, fv = f;
                if (d > 0 && info.rank() > 0) {
                    const auto& sol = info.solve();
                    v -= w.dot(sol.mean);
                    fv += sol.variance_of(w);
                }
                inn.innovation = v;
                inn.variance = fv;
                if (fv <= kSingularTol) {
                    if (!diffuse_before) {
                        std::ostringstream os;
                        os << "numerically singular innovation variance " << fv << " at step " << j
                           << " (replicate '" << entry.replicate << "')";
                        throw NumericalError(os.str());
                    }
                    singular = true;
                } else {
                    res.loglik += -0.5 * (kLog2Pi + std::log(fv) + v * v / fv);
                }
            }
            if (options.keep_innovations && !singular) res.innovations.push_back(inn);

            UpdateKind kind;
            if (f > kSingularTol) {
                kind = UpdateKind::regular;
                a.noalias() += mvec * (e / f);
                if (d > 0) {
                    big_a.noalias() -= mvec * (w / f);
                    info.add_regular(w, e, f);
                }
                p.noalias() -= (1.0 / f) * mvec * mvec.transpose();
            } else if (d > 0 && info.add_constraint(w, e)) {
                kind = UpdateKind::constraint;
            } else {
                kind = UpdateKind::skipped;
            }
            if (sc) {
                sc->kind = kind;
                if (kind == UpdateKind::regular) {
                    sc->z = z;
                    sc->e = e;
                    sc->w = w;
                    sc->f = f;
                    sc->m = mvec;
                }
            }
        }
        symmetrize(p);
        check_diagonal(p, j, "filtered covariance");

        if (options.keep_states) {
            if (d == 0 || (info.rank() == d && res.n_used > 0)) {
                const auto& sol = info.solve();
                res.filtered_mean.push_back(a + big_a * sol.mean);
                MatrixXd c = p + big_a * sol.cov * big_a.transpose();
                symmetrize(c);
                res.filtered_cov.push_back(std::move(c));
                res.filtered_diffuse.push_back(false);
            } else {
                res.filtered_mean.push_back(a);
                res.filtered_cov.push_back(p);
                res.filtered_diffuse.push_back(true);
            }
        }

        if (j + 1 < series.steps()) {
            auto tr = model.transition(j);
            if (tr.transition.rows() != m || tr.transition.cols() != m || tr.covariance.rows() != m ||
                tr.covariance.cols() != m) {
                throw InputError("system matrices have wrong dimensions at step " + std::to_string(j));
            }
            a = tr.transition * a;
            if (d > 0) big_a = tr.transition * big_a;
            if (d_state > 0) raw = tr.transition * raw;
            tmp.noalias() = tr.transition * p;
            p.noalias() = tmp * tr.transition.transpose();
            p += tr.covariance;
            symmetrize(p);
            check_diagonal(p, j + 1, "predicted covariance");
            if (st) st->transition = std::move(tr.transition);
        }
    }

    if (res.n_used > 0 && info.rank() < d) {
        throw InsufficientDataError(insufficient_message(info.rank(), d), static_cast<int>(info.rank()),
                                    static_cast<int>(d));
    }
    if (res.n_used > 0) {
        double integrated = 0.0;
        if (d > 0) {
            integrated = info.integrated_loglik();
            const Eigen::LLT<MatrixXd> g(info.gram());
            if (g.info() != Eigen::Success) throw NumericalError("diffuse design Gram matrix is singular");
            res.marginal_loglik = integrated + g.matrixLLT().diagonal().array().log().sum();
            run.diffuse = info.solve();
        } else {
            res.marginal_loglik = res.loglik;
            run.diffuse = DiffuseSolution{};
        }
    }
    if (!std::isfinite(res.loglik) || !std::isfinite(res.marginal_loglik)) {
        throw NumericalError("log-likelihood is not finite");
    }
    return run;
}

} // namespace

FilterResult diffuse_filter(const StateSpaceModel& model, const ObservationSeries& series,
                            const FilterOptions& options) {
    return run_filter(model, series, options, false).result;
}

SmootherResult diffuse_smoother(const StateSpaceModel& model, const ObservationSeries& series) {
    FilterRun run = run_filter(model, series, FilterOptions{}, true);
    const Index m = model.state_dim();
    const Index k = model.n_regressors();
    const Index d = model.diffuse_count();
    if (!run.diffuse) {
        // No observed values at all.
        if (d > 0) throw InsufficientDataError(insufficient_message(0, d), 0, static_cast<int>(d));
        run.diffuse = DiffuseSolution{};
    }
    const DiffuseSolution& delta = *run.diffuse;
    const VectorXd delta_mean = d > 0 ? delta.mean : VectorXd();
    const MatrixXd delta_cov = d > 0 ? delta.cov : MatrixXd();

    const std::size_t steps = series.steps();
    SmootherResult out;
    out.times.resize(steps);
    out.mean.resize(steps);
    out.cov.resize(steps);

    // Backward recursions for the finite part (r, N) and for the response of
    // r to delta (rd).
    VectorXd r = VectorXd::Zero(m);
    MatrixXd rd = MatrixXd::Zero(m, d);
    MatrixXd n = MatrixXd::Zero(m, m);

    for (std::size_t jj = steps; jj-- > 0;) {
        const StepTrace& st = run.trace[jj];
        if (jj + 1 < steps) {
            const MatrixXd& t = st.transition;
            r = t.transpose() * r;
            rd = t.transpose() * rd;
            n = t.transpose() * n * t;
        }
        for (std::size_t ii = st.scalars.size(); ii-- > 0;) {
            const ScalarTrace& sc = st.scalars[ii];
            if (sc.kind != UpdateKind::regular) continue;
            // L = I - (m / f) z; apply L' on the left and L on the right.
            const VectorXd kg = sc.m / sc.f;
            r -= sc.z.transpose() * kg.dot(r);
            r += sc.z.transpose() * (sc.e / sc.f);
            if (d > 0) {
                rd -= sc.z.transpose() * (kg.transpose() * rd);
                rd -= sc.z.transpose() * (sc.w / sc.f);
            }
            const VectorXd nk = n * kg;
            const double knk = kg.dot(nk);
            n.noalias() -= sc.z.transpose() * nk.transpose();
            n.noalias() -= nk * sc.z;
            n.noalias() += (knk + 1.0 / sc.f) * sc.z.transpose() * sc.z;
        }

        VectorXd mean = st.a + st.p * r;
        MatrixXd cov = st.p - st.p * n * st.p;
        if (d > 0) {
            const MatrixXd b = st.a_diffuse + st.p * rd;
            mean.noalias() += b * delta_mean;
            cov.noalias() += b * delta_cov * b.transpose();
        }
        symmetrize(cov);
        check_diagonal(cov, jj, "smoothed covariance");
        out.times[jj] = series.absolute_time(jj);
        out.mean[jj] = std::move(mean);
        out.cov[jj] = std::move(cov);
    }
    out.beta = k > 0 ? VectorXd(delta_mean.tail(k)) : VectorXd();
    out.beta_cov = k > 0 ? MatrixXd(delta_cov.bottomRightCorner(k, k)) : MatrixXd();
    out.filter = std::move(run.result);
    return out;
}

ComponentSeries extract_component(const SmootherResult& smoothed, const RowVectorXd& selector) {
    ComponentSeries c;
    const std::size_t steps = smoothed.mean.size();
    if (steps > 0 && selector.size() != smoothed.mean.front().size()) {
        throw InputError("component selector has length " + std::to_string(selector.size()) +
                         ", expected " + std::to_string(smoothed.mean.front().size()));
    }
    c.times = smoothed.times;
    c.estimate.resize(steps);
    c.variance.resize(steps);
    for (std::size_t j = 0; j < steps; ++j) {
        c.estimate[j] = selector.dot(smoothed.mean[j]);
        c.variance[j] = std::max(0.0, selector.dot(smoothed.cov[j] * selector.transpose()));
    }
    return c;
}

} // namespace growthssm
