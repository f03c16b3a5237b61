#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace growthssm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

/// Strictly increasing time stamps. Gaps may differ.
class TimeGrid {
  public:
    TimeGrid() = default;
    explicit TimeGrid(std::vector<double> times);

    const std::vector<double>& times() const { return times_; }
    std::size_t size() const { return times_.size(); }
    bool empty() const { return times_.empty(); }
    double operator[](std::size_t j) const { return times_[j]; }
    /// Gap between step j and j+1.
    double gap(std::size_t j) const { return times_[j + 1] - times_[j]; }

  private:
    std::vector<double> times_;
};

/// One long-format measurement. A missing value marks a point to predict.
struct Record {
    std::string group;
    std::string replicate;
    double time = 0.0;
    std::optional<double> value;

    bool operator==(const Record&) const = default;
};

/// Longitudinal records; (group, replicate, time) is unique.
class Dataset {
  public:
    Dataset() = default;
    explicit Dataset(std::vector<Record> records);

    const std::vector<Record>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

    /// Group labels in order of first appearance.
    std::vector<std::string> groups() const;
    /// Replicate labels of one group in order of first appearance.
    std::vector<std::string> replicates(const std::string& group) const;
    Dataset filter_group(const std::string& group) const;
    std::size_t n_observed() const;

    bool operator==(const Dataset&) const = default;

  private:
    std::vector<Record> records_;
};

struct ObservationEntry {
    std::string replicate;
    std::optional<double> value;
    /// Row of X_t for this scalar; empty when the model has no regressors.
    RowVectorXd regressors;
};

/// One group's data arranged by distinct time. Times are relative to `origin`.
class ObservationSeries {
  public:
    ObservationSeries() = default;
    ObservationSeries(std::string group, double origin, TimeGrid grid,
                      std::vector<std::vector<ObservationEntry>> entries);

    /// Builds the series of `group`; times are shifted so the first one is 0.
    static ObservationSeries from_dataset(const Dataset& data, const std::string& group);
    /// Convenience for single-group datasets.
    static ObservationSeries from_dataset(const Dataset& data);

    const std::string& group() const { return group_; }
    double origin() const { return origin_; }
    const TimeGrid& grid() const { return grid_; }
    std::size_t steps() const { return grid_.size(); }
    std::span<const ObservationEntry> entries(std::size_t step) const { return entries_[step]; }

    /// Replicate labels in order of first appearance.
    std::vector<std::string> replicates() const;
    std::size_t n_observed() const;
    std::size_t n_entries() const;
    /// Absolute time of step j.
    double absolute_time(std::size_t j) const { return origin_ + grid_[j]; }

    Dataset to_dataset() const;

  private:
    std::string group_;
    double origin_ = 0.0;
    TimeGrid grid_;
    std::vector<std::vector<ObservationEntry>> entries_;
};

struct ObservationDesign {
    RowVectorXd z;
    double noise_variance = 0.0;
};

/// Transition from step j to j+1.
struct StateTransition {
    MatrixXd transition;
    MatrixXd covariance;
};

using DesignFn = std::function<ObservationDesign(std::size_t step, const ObservationEntry&)>;
using TransitionFn = std::function<StateTransition(std::size_t step)>;

/// Linear Gaussian state space model
///
///   y_{j,i} = z_{j,i} alpha_j + x_{j,i} beta + eps_{j,i},   eps ~ N(0, h_{j,i})
///   alpha_{j+1} = T_j alpha_j + eta_{j+1},                   eta ~ N(0, Q_j)
///
/// with alpha_0 partially diffuse and beta diffuse. System matrices are
/// produced on demand by pure functions of the step index.
class StateSpaceModel {
  public:
    StateSpaceModel(Index state_dim, std::vector<Index> diffuse_indices, VectorXd init_mean,
                    MatrixXd init_cov, Index n_regressors, DesignFn design,
                    TransitionFn transition);

    Index state_dim() const { return state_dim_; }
    const std::vector<Index>& diffuse_indices() const { return diffuse_; }
    Index n_regressors() const { return n_regressors_; }
    /// Diffuse initial elements plus regression coefficients.
    Index diffuse_count() const { return static_cast<Index>(diffuse_.size()) + n_regressors_; }
    const VectorXd& init_mean() const { return init_mean_; }
    const MatrixXd& init_cov() const { return init_cov_; }

    ObservationDesign design(std::size_t step, const ObservationEntry& entry) const {
        return design_(step, entry);
    }
    StateTransition transition(std::size_t step) const { return transition_(step); }

  private:
    Index state_dim_;
    std::vector<Index> diffuse_;
    VectorXd init_mean_;
    MatrixXd init_cov_;
    Index n_regressors_;
    DesignFn design_;
    TransitionFn transition_;
};

struct ValidationReport {
    Index state_dim = 0;
    Index diffuse_count = 0;
    std::size_t steps = 0;
    std::size_t scalars = 0;
    std::size_t observed = 0;
};

/// Throws InputError when `m` is not symmetric or has a Cholesky pivot below -1e-12
/// (relative to its largest diagonal). `what` prefixes the message.
void check_psd(const MatrixXd& m, const std::string& what);

/// Checks every matrix the model produces over the series.
ValidationReport validate_model(const StateSpaceModel& model, const ObservationSeries& series);

/// Draws one realization of the model at the template's (replicate, time) slots.
/// `diffuse_values` holds the diffuse initial elements followed by beta.
Dataset simulate(const StateSpaceModel& model, const ObservationSeries& series_template,
                 std::uint64_t seed, std::span<const double> diffuse_values);

} // namespace growthssm
