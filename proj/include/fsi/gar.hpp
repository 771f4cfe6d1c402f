#pragma once

#include <Eigen/Dense>
#include <vector>

namespace fsi {

struct QuantileFit {
    double tau = 0.5;
    Eigen::VectorXd coefficients;
    double pinball_sum = 0.0;
    int n = 0;
    int p = 0;
};

// Pinball loss rho_tau(u) = u (tau - 1{u < 0}).
double pinball_loss(double residual, double tau);

// Quantile regression by a primal-dual interior-point method on the LP dual;
// the objective is within 1e-6 (relative) of the exact LP optimum. X must
// include the intercept column and have full column rank.
QuantileFit qr_fit(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, double tau);

// Quantile score 2 (1{y < q} - tau)(q - y); nonnegative.
double quantile_score(double y, double q, double tau);

enum class CrpsWeight { Uniform, Centre, Left };

struct DensityForecast {
    std::vector<double> tau_grid;        // increasing, in (0,1)
    std::vector<double> quantiles;       // nondecreasing after rearrangement
};

// Riemann sum over a uniform tau grid of w(tau) QS(tau) with the grid
// spacing as d-tau (1 for a single-point grid).
double qwcrps(const DensityForecast& forecast, double y, CrpsWeight weight);

// Average over the tau grid of AIC(tau) = 2n ln(mean pinball) + 2p and the
// BIC analogue.
std::pair<double, double> quantile_ic(const std::vector<QuantileFit>& fits);

// Probability integral transform through the (rearranged) quantile grid with
// linear interpolation and tail-slope extrapolation, clamped to [0,1].
double pit(const DensityForecast& forecast, double y);

std::vector<double> default_tau_grid();  // 0.05 .. 0.95 step 0.05

struct BacktestConfig {
    std::vector<double> tau_grid = default_tau_grid();
    double initial_window_fraction = 0.6;
};

struct QuantileBacktestReport {
    int horizon = 1;
    double qwcrps_uniform = 0.0;
    double qwcrps_centre = 0.0;
    double qwcrps_left = 0.0;
    double aic = 0.0;
    double bic = 0.0;
    std::vector<double> pits;
    bool ks_pass = false;       // PIT uniformity within the 5% KS band
    int origins_used = 0;
    int origins_skipped = 0;
};

// Expanding-window growth-at-risk backtest. Design: constant, one GDP lag,
// the supplied risk regressors. `risk` may have zero columns (lag-only
// benchmark).
QuantileBacktestReport backtest(const std::vector<double>& gdp_growth,
                                const Eigen::MatrixXd& risk, int horizon,
                                const BacktestConfig& cfg = {});

}  // namespace fsi
