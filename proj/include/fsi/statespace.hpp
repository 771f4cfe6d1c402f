#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "fsi/panel.hpp"
#include "fsi/rng.hpp"

namespace fsi {

// Companion-form linear Gaussian state space for the factor model:
//   x_t = L alpha_t + eps_t,         eps ~ N(0, diag(sigma_eps))
//   alpha_{t+1} = c + Phi alpha_t + R u_t,  u ~ N(0, Q)
// with alpha_t stacking (f_t, ..., f_{t-p+1}); Q acts on the first r states.
struct StateSpaceModel {
    int r = 1;  // factor count
    int p = 1;  // VAR order
    Eigen::MatrixXd transition;     // (r p) x (r p), companion
    Eigen::MatrixXd Q;              // r x r innovation covariance
    Eigen::MatrixXd measurement;    // m x (r p), loadings in first r columns
    Eigen::VectorXd sigma_eps;      // m, diagonal measurement variances
    Eigen::VectorXd intercept;      // r, state intercept
    Eigen::VectorXd init_mean;      // r p
    Eigen::MatrixXd init_cov;       // r p x r p (large for diffuse states)

    int state_dim() const { return r * p; }
    int obs_dim() const { return static_cast<int>(measurement.rows()); }

    // Companion model from VAR(p) blocks: phi is r x (r p).
    static StateSpaceModel from_var(const Eigen::MatrixXd& loadings, const Eigen::MatrixXd& phi,
                                    const Eigen::MatrixXd& q, const Eigen::VectorXd& sigma_eps,
                                    const Eigen::VectorXd& intercept, double diffuse_var = 1e7);

    void validate() const;
};

struct FilterResult {
    Eigen::MatrixXd filtered_mean;    // T x n
    Eigen::MatrixXd predicted_mean;   // T x n (one-step-ahead)
    std::vector<Eigen::MatrixXd> filtered_cov;
    std::vector<Eigen::MatrixXd> predicted_cov;
    double loglik = 0.0;
    std::vector<double> loglik_terms;  // per time point
};

struct SmootherResult {
    Eigen::MatrixXd mean;  // T x n
    std::vector<Eigen::MatrixXd> cov;
    // Cov(alpha_t, alpha_{t-1} | all data), index t from 1.
    std::vector<Eigen::MatrixXd> lag_cov;
};

// Missing cells (NaN) deflate the measurement equation row-wise. An optional
// per-time state intercept (T x r) overrides the static one.
FilterResult kalman_filter(const StateSpaceModel& model, const TimeSeriesPanel& panel,
                           const Eigen::MatrixXd* state_intercept = nullptr);

SmootherResult kalman_smoother(const StateSpaceModel& model, const TimeSeriesPanel& panel,
                               const FilterResult& filter,
                               const Eigen::MatrixXd* state_intercept = nullptr);

struct EmOptions {
    int max_iterations = 500;
    double rel_tolerance = 1e-6;
    double diffuse_var = 1e7;
    double sigma_floor = 1e-8;
};

struct EstimatedFactorModel {
    StateSpaceModel model;
    Eigen::MatrixXd factors;            // T x r smoothed paths
    std::vector<double> loglik_trace;   // per iteration
    std::vector<bool> stationary;       // ADF at 5% per factor
    std::vector<double> explained_share;
    bool converged = false;
};

EstimatedFactorModel em_estimate(const TimeSeriesPanel& panel, int r, int p = 1,
                                 const EmOptions& opts = {});

struct ExplainedVarianceRow {
    int r;
    double share;
    double cumulative;
};

std::vector<ExplainedVarianceRow> explained_variance(const Eigen::MatrixXd& loadings,
                                                     const Eigen::MatrixXd& factors,
                                                     const TimeSeriesPanel& panel);

struct FfbsOptions {
    int n_draws = 1000;
    int burn_in = 200;
    std::uint64_t seed = 0;  // mandatory: callers must set explicitly
    bool fix_measurement = false;  // keep L and sigma_eps at their initial values
    double loading_prior_var = 10.0;
    double var_coef_prior_var = 10.0;
    double ig_shape = 2.0;
    double ig_scale = 0.01;
};

struct FfbsDraws {
    std::vector<Eigen::MatrixXd> loadings;   // per retained draw, m x r
    std::vector<Eigen::MatrixXd> phi;        // r x (r p + 1), intercept first
    std::vector<Eigen::MatrixXd> q;          // r x r
    std::vector<Eigen::VectorXd> sigma_eps;  // m
    Eigen::MatrixXd factor_mean;             // T x r posterior mean
    Eigen::MatrixXd factor_sd;               // T x r posterior sd
    int rejected_covariance_draws = 0;
};

FfbsDraws ffbs_sample(const TimeSeriesPanel& panel, int r, int p, const FfbsOptions& opts);

// One forward-filter backward-sample pass: returns a T x r draw of the
// contemporaneous factor block given the filtered moments. The optional
// per-time intercept must match the one passed to the filter.
Eigen::MatrixXd ffbs_draw_states(const StateSpaceModel& model, const FilterResult& filter,
                                 Rng& rng, const Eigen::MatrixXd* state_intercept = nullptr);

// Rowwise arithmetic mean of standardized, sign-aligned factors.
std::vector<double> combine_factors(const Eigen::MatrixXd& factors);

// Scale each column to unit variance and flip its sign to correlate
// positively with the reference series (typically the cross-sectional mean of
// the standardized inputs).
Eigen::MatrixXd align_factors(const Eigen::MatrixXd& factors, const Eigen::VectorXd& reference);

}  // namespace fsi
