#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace growthssm {

/// Objective to minimize. Non-finite values are treated as +infinity.
using Objective = std::function<double(const Eigen::VectorXd&)>;

struct OptimizeResult {
    Eigen::VectorXd x;
    double value = 0.0;
    int evaluations = 0;
    int iterations = 0;
    int restarts = 0;
    bool converged = false;
    /// Final simplex diameter (Nelder-Mead) or gradient norm (quasi-Newton).
    double final_size = 0.0;
    /// Best objective value after each iteration; non-increasing.
    std::vector<double> trace;
};

struct OptimizeOptions {
    int max_evals = 4000;
    /// Stop once the objective spread over the simplex (or the decrease per
    /// iteration) falls below this.
    double ftol = 1e-8;
    double xtol = 1e-7;
    double initial_step = 0.5;
    /// Restarts from the converged point until no further improvement.
    int max_restarts = 4;
};

OptimizeResult nelder_mead(const Objective& f, const Eigen::VectorXd& x0, const OptimizeOptions& options = {});

/// BFGS with central finite-difference gradients and backtracking line search.
OptimizeResult quasi_newton_fd(const Objective& f, const Eigen::VectorXd& x0,
                               const OptimizeOptions& options = {});

} // namespace growthssm
