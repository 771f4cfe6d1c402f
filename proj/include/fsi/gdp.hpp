#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "fsi/panel.hpp"

namespace fsi {

// Variance ratio var(GDP)/var(GDP_i).
double xi_ratio(double var_gdp, double var_gdp_i);

struct XiInterval {
    double lo = 0.35;
    double hi = 1.15;
};

// Latent monthly GDP growth: g_t = rho g_{t-1} + gamma' X_t + eps_G, observed
// through two quarterly measures (3-month aggregates plus noise) and a
// monthly unemployment reading that loads on g only.
struct MixedFrequencyGdpModel {
    std::vector<Date> months;
    Eigen::VectorXd gdp_p;        // per month; NaN off quarter ends
    Eigen::VectorXd gdp_e;
    Eigen::MatrixXd indicators;   // T x k, regressors in the state equation
    Eigen::VectorXd unemployment; // T
    XiInterval xi;

    // Parameters (initial values for the sampler).
    double rho = 0.5;
    Eigen::VectorXd gamma;  // k
    double sigma2_g = 1.0;
    double sigma2_p = 1.0;
    double sigma2_e = 1.0;
    double u_intercept = 0.0;
    double u_loading = 0.0;
    double sigma2_u = 1.0;

    int months_count() const { return static_cast<int>(gdp_p.size()); }
};

struct MfModelConfig {
    XiInterval xi;
    bool include_unemployment = true;
    // Fix the GDP measurement noise variances instead of sampling them
    // (degenerate-noise experiments).
    std::optional<double> fixed_sigma2_p;
    std::optional<double> fixed_sigma2_e;
};

// quarterly: two columns (production, expenditure) with rows at quarter-end
// months of the monthly calendar; monthly: indicator panel whose last column
// is unemployment when include_unemployment is set.
MixedFrequencyGdpModel build_mf_model(const TimeSeriesPanel& quarterly,
                                      const TimeSeriesPanel& monthly,
                                      const MfModelConfig& config = {});

struct MonthlyGdpPosterior {
    std::vector<Date> months;
    std::vector<double> mean;
    std::vector<double> median;
    std::vector<double> q05;
    std::vector<double> q95;
    int draws = 0;
    int xi_rejections = 0;
    double xi_acceptance_rate = 1.0;

    // Posterior means of the sampled parameters.
    double rho = 0.0;
    Eigen::VectorXd gamma;
    double sigma2_g = 0.0;
    double sigma2_p = 0.0;
    double sigma2_e = 0.0;
    double xi_p = 0.0;  // mean over draws of var(agg)/(var(agg)+sigma2_i)
    double xi_e = 0.0;
    // Range of the per-draw ratios across retained draws.
    double xi_p_min = 0.0, xi_p_max = 0.0;
    double xi_e_min = 0.0, xi_e_max = 0.0;
    double u_loading = 0.0;
};

struct ReconcileOptions {
    int n_draws = 5000;
    int burn_in = 1000;
    std::uint64_t seed = 0;  // mandatory
    bool sample_parameters = true;  // false: FFBS path draws only
    std::optional<double> fixed_sigma2_p;
    std::optional<double> fixed_sigma2_e;
};

MonthlyGdpPosterior reconcile_gibbs(const MixedFrequencyGdpModel& model,
                                    const ReconcileOptions& opts);

enum class IndicatorTransform { GrowthRate, Level };

// Per-column transformation of raw monthly inputs: annualized 100*dlog growth
// rates for activity/price series, levels for interest rates. The first row
// is dropped when any column takes a growth rate.
TimeSeriesPanel transform_indicators(const TimeSeriesPanel& panel,
                                     const std::vector<IndicatorTransform>& roles);

}  // namespace fsi
