#include "fsi/transforms.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "fsi/errors.hpp"
#include "fsi/panel.hpp"
#include "fsi/stats.hpp"

namespace fsi {

std::vector<double> cmax(const std::vector<double>& series, int window) {
    if (window < 1) throw ConfigError("cmax: window must be >= 1");
    std::vector<double> out(series.size());
    for (std::size_t t = 0; t < series.size(); ++t) {
        const std::size_t lo = t + 1 >= static_cast<std::size_t>(window)
                                   ? t + 1 - static_cast<std::size_t>(window)
                                   : 0;
        double mx = 0.0;
        for (std::size_t s = lo; s <= t; ++s) {
            if (!(series[s] > 0.0))
                throw DataError("cmax: nonpositive value at index " + std::to_string(s));
            mx = std::max(mx, series[s]);
        }
        out[t] = 1.0 - series[t] / mx;
    }
    return out;
}

std::vector<double> ewsd(const std::vector<double>& series, double decay, int burn_in) {
    if (!(decay > 0.0 && decay < 1.0)) throw ConfigError("ewsd: decay must be in (0,1)");
    constexpr int kLookback = 300;

    std::vector<double> logret;
    logret.reserve(series.size() > 0 ? series.size() - 1 : 0);
    for (std::size_t t = 0; t < series.size(); ++t) {
        if (!(series[t] > 0.0))
            throw DataError("ewsd: nonpositive price at index " + std::to_string(t));
        if (t > 0) logret.push_back(std::log(series[t] / series[t - 1]));
    }

    // Rolling exponentially weighted sums over the last kLookback returns,
    // updated in O(1) per step. rw2 carries decay^2 weights for the
    // bias-corrected denominator of the weighted variance.
    const double dl = std::pow(decay, kLookback);
    double rw = 0.0, rw2 = 0.0, rx = 0.0, rxx = 0.0;
    std::vector<double> result(series.size(), missing_value());
    for (std::size_t i = 0; i < logret.size(); ++i) {
        rw = decay * rw + 1.0;
        rw2 = decay * decay * rw2 + 1.0;
        rx = decay * rx + logret[i];
        rxx = decay * rxx + logret[i] * logret[i];
        if (i >= static_cast<std::size_t>(kLookback)) {
            const double old = logret[i - kLookback];
            rw -= dl;
            rw2 -= std::pow(decay * decay, kLookback);
            rx -= dl * old;
            rxx -= dl * old * old;
        }
        if (static_cast<int>(i) + 1 < burn_in) continue;
        const double mean = rx / rw;
        const double ssq = rxx - 2.0 * mean * rx + mean * mean * rw;  // sum w (x - mean)^2
        const double denom = rw - rw2 / rw;
        const double v = denom > 0.0 ? std::max(ssq, 0.0) / denom : 0.0;
        result[i + 1] = std::sqrt(std::max(v, 0.0));
    }
    return result;
}

std::vector<double> corp_spread(const std::vector<double>& corp_yield,
                                const std::vector<double>& govt_yield) {
    if (corp_yield.size() != govt_yield.size())
        throw DataError("corp_spread: length mismatch");
    std::vector<double> out(corp_yield.size());
    for (std::size_t t = 0; t < out.size(); ++t) out[t] = corp_yield[t] - govt_yield[t];
    return out;
}

namespace {

// MacKinnon (1994) response-surface coefficients, univariate regression.
struct MacKinnonCoef {
    double tau_star, tau_min, tau_max;
    double smallp[3];
    double largep[4];
};

constexpr MacKinnonCoef kConst = {
    -1.61, -18.83, 2.74, {2.1659, 1.4412, 0.038269}, {1.7339, 0.93202, -0.12745, -0.010368}};
constexpr MacKinnonCoef kConstTrend = {
    -2.89, -16.18, 0.7, {3.2512, 1.6047, 0.049588}, {2.5261, 0.61654, -0.37956, -0.060285}};

struct AdfFit {
    double tstat;
    double ssr;
    int nobs;
};

// OLS of the augmented regression at a given lag order; rows start at
// `start` so lag orders can share a common sample for BIC comparison.
AdfFit adf_regression(const std::vector<double>& x, AdfSpec spec, int lags, std::size_t start) {
    const std::size_t T = x.size();
    const std::size_t n = T - start;  // usable Delta-x observations
    const int det = spec == AdfSpec::Constant ? 1 : 2;
    const int p = det + 1 + lags;
    if (n < static_cast<std::size_t>(p) + 1) throw DataError("adf_test: series too short");

    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd y(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t t = start + i;  // Delta x_t = x_t - x_{t-1}
        y(static_cast<Eigen::Index>(i)) = x[t] - x[t - 1];
        int c = 0;
        X(i, c++) = 1.0;
        if (det == 2) X(i, c++) = static_cast<double>(t);
        X(i, c++) = x[t - 1];
        for (int l = 1; l <= lags; ++l) X(i, c++) = x[t - l] - x[t - l - 1];
    }
    const Eigen::MatrixXd xtx = X.transpose() * X;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
    const Eigen::VectorXd beta = ldlt.solve(X.transpose() * y);
    const Eigen::VectorXd resid = y - X * beta;
    const double ssr = resid.squaredNorm();
    const double sigma2 = ssr / (static_cast<double>(n) - p);
    const Eigen::MatrixXd xtx_inv = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
    const int gamma_idx = det;  // coefficient on the lagged level
    const double se = std::sqrt(sigma2 * xtx_inv(gamma_idx, gamma_idx));
    if (!(se > 0.0)) throw NumericError("adf_test: degenerate regression");
    return {beta(gamma_idx) / se, ssr, static_cast<int>(n)};
}

}  // namespace

double mackinnon_p(double stat, AdfSpec spec) {
    const MacKinnonCoef& c = spec == AdfSpec::Constant ? kConst : kConstTrend;
    if (stat > c.tau_max) return 1.0;
    if (stat < c.tau_min) return 0.0;
    double z;
    if (stat <= c.tau_star) {
        z = c.smallp[0] + c.smallp[1] * stat + c.smallp[2] * stat * stat;
    } else {
        z = c.largep[0] + stat * (c.largep[1] + stat * (c.largep[2] + stat * c.largep[3]));
    }
    return norm_cdf(z);
}

AdfResult adf_test(const std::vector<double>& series, AdfSpec spec, int max_lags,
                   AdfLagRule lag_rule) {
    for (double v : series)
        if (std::isnan(v)) throw DataError("adf_test: series contains missing values");
    const std::size_t T = series.size();
    if (max_lags < 0) {
        max_lags = static_cast<int>(
            std::floor(12.0 * std::pow(static_cast<double>(T) / 100.0, 0.25)));
    }
    if (T < static_cast<std::size_t>(max_lags) + 10) throw DataError("adf_test: series too short");

    int lags = max_lags;
    if (lag_rule == AdfLagRule::Bic) {
        // Common estimation sample across candidate lag orders.
        const std::size_t start = static_cast<std::size_t>(max_lags) + 1;
        double best = std::numeric_limits<double>::infinity();
        lags = 0;
        for (int l = 0; l <= max_lags; ++l) {
            const AdfFit fit = adf_regression(series, spec, l, start);
            const int det = spec == AdfSpec::Constant ? 1 : 2;
            const double k = det + 1 + l;
            const double bic =
                fit.nobs * std::log(fit.ssr / fit.nobs) + k * std::log(static_cast<double>(fit.nobs));
            if (bic < best) {
                best = bic;
                lags = l;
            }
        }
    }

    const AdfFit fit = adf_regression(series, spec, lags, static_cast<std::size_t>(lags) + 1);
    AdfResult res;
    res.statistic = fit.tstat;
    res.lags_used = lags;
    res.spec = spec;
    res.p_value = mackinnon_p(fit.tstat, spec);
    if (res.p_value < 0.001) {
        res.p_value = 0.001;
        res.p_value_clamped = true;
    } else if (res.p_value > 0.999) {
        res.p_value = 0.999;
        res.p_value_clamped = true;
    }
    return res;
}

}  // namespace fsi
