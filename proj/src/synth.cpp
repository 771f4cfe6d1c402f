#include "fsi/synth.hpp"

#include <cmath>
#include <string>

#include "fsi/errors.hpp"
#include "fsi/rng.hpp"

namespace fsi {

std::pair<TimeSeriesPanel, DgpTruth> gen_factor_panel(const FactorDgpSpec& spec) {
    const int r = spec.r1 + spec.r2;
    if (r >= spec.m || r < 1) throw ConfigError("gen_factor_panel: need 1 <= r1+r2 < m");
    if (spec.T < 10) throw ConfigError("gen_factor_panel: T too small");
    if (std::fabs(spec.ar_coef) >= 1.0)
        throw ConfigError("gen_factor_panel: stationary AR coefficient outside unit circle");
    std::vector<int> orders = spec.d;
    if (orders.empty()) orders.assign(static_cast<std::size_t>(spec.r1), 1);
    if (static_cast<int>(orders.size()) != spec.r1)
        throw ConfigError("gen_factor_panel: d list length must equal r1");

    Rng rng(spec.seed);
    DgpTruth truth;
    truth.factors.resize(spec.T, r);

    // Non-stationary factors: d-fold cumulated Gaussian innovations.
    for (int j = 0; j < spec.r1; ++j) {
        Eigen::VectorXd v(spec.T);
        for (int t = 0; t < spec.T; ++t) v(t) = spec.drift + rng.normal();
        for (int pass = 0; pass < orders[static_cast<std::size_t>(j)]; ++pass)
            for (int t = 1; t < spec.T; ++t) v(t) += v(t - 1);
        truth.factors.col(j) = v;
        truth.stationary.push_back(false);
    }
    // Stationary factors: AR(1) with unit stationary variance.
    const double innov_sd = std::sqrt(1.0 - spec.ar_coef * spec.ar_coef);
    for (int j = spec.r1; j < r; ++j) {
        double f = rng.normal();
        for (int t = 0; t < spec.T; ++t) {
            truth.factors(t, j) = f;
            f = spec.ar_coef * f + innov_sd * rng.normal();
        }
        truth.stationary.push_back(true);
    }

    // Orthonormal random loadings with the sign convention.
    Eigen::MatrixXd raw(spec.m, r);
    for (int i = 0; i < spec.m; ++i)
        for (int j = 0; j < r; ++j) raw(i, j) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
    truth.loadings = qr.householderQ() * Eigen::MatrixXd::Identity(spec.m, r);
    for (int j = 0; j < r; ++j) {
        Eigen::Index imax = 0;
        truth.loadings.col(j).cwiseAbs().maxCoeff(&imax);
        if (truth.loadings(imax, j) < 0.0) truth.loadings.col(j) = -truth.loadings.col(j);
    }

    TimeSeriesPanel panel;
    panel.frequency = Frequency::Monthly;
    panel.dates = monthly_calendar(Date{2000, 1, 1}, static_cast<std::size_t>(spec.T));
    for (int i = 0; i < spec.m; ++i) panel.names.push_back("x" + std::to_string(i + 1));
    panel.values = truth.factors * truth.loadings.transpose();
    for (int t = 0; t < spec.T; ++t)
        for (int i = 0; i < spec.m; ++i) panel.values(t, i) += spec.noise_scale * rng.normal();
    panel.validate();
    return {std::move(panel), std::move(truth)};
}

MfGdpData gen_mf_gdp(const MfGdpSpec& spec) {
    if (spec.months % 3 != 0) throw ConfigError("gen_mf_gdp: months must be divisible by 3");
    if (!(spec.xi_p > 0.0) || !(spec.xi_e > 0.0))
        throw ConfigError("gen_mf_gdp: variance ratios must be positive");
    if (std::fabs(spec.rho) >= 1.0) throw ConfigError("gen_mf_gdp: |rho| must be < 1");

    Rng rng(spec.seed);
    const int T = spec.months;
    const int Q = T / 3;

    // Latent monthly growth.
    std::vector<double> g(static_cast<std::size_t>(T));
    double cur = rng.normal() * spec.sigma_g / std::sqrt(1.0 - spec.rho * spec.rho);
    for (int t = 0; t < T; ++t) {
        g[static_cast<std::size_t>(t)] = cur;
        cur = spec.rho * cur + spec.sigma_g * rng.normal();
    }

    // Quarterly aggregates (3-month sums) and their sample variance, from
    // which the measurement noise variances implement the configured ratios
    // xi = var(GDP)/var(GDP_i)  =>  var(noise_i) = var(A) (1 - xi) / xi,
    // clamped at zero for xi >= 1.
    std::vector<double> agg(static_cast<std::size_t>(Q));
    double mean_a = 0.0;
    for (int q = 0; q < Q; ++q) {
        agg[static_cast<std::size_t>(q)] =
            g[static_cast<std::size_t>(3 * q)] + g[static_cast<std::size_t>(3 * q + 1)] +
            g[static_cast<std::size_t>(3 * q + 2)];
        mean_a += agg[static_cast<std::size_t>(q)];
    }
    mean_a /= Q;
    double var_a = 0.0;
    for (double a : agg) var_a += (a - mean_a) * (a - mean_a);
    var_a /= (Q - 1);
    const double sd_p = std::sqrt(std::max(var_a * (1.0 - spec.xi_p) / spec.xi_p, 0.0));
    const double sd_e = std::sqrt(std::max(var_a * (1.0 - spec.xi_e) / spec.xi_e, 0.0));

    MfGdpData out;
    const auto calendar = monthly_calendar(Date{2000, 1, 1}, static_cast<std::size_t>(T));

    out.quarterly.frequency = Frequency::Quarterly;
    out.quarterly.names = {"gdp_p", "gdp_e"};
    out.quarterly.values.resize(Q, 2);
    for (int q = 0; q < Q; ++q) {
        out.quarterly.dates.push_back(calendar[static_cast<std::size_t>(3 * q + 2)]);
        out.quarterly.values(q, 0) = agg[static_cast<std::size_t>(q)] + sd_p * rng.normal();
        out.quarterly.values(q, 1) = agg[static_cast<std::size_t>(q)] + sd_e * rng.normal();
    }
    out.quarterly.validate();

    out.monthly.frequency = Frequency::Monthly;
    out.monthly.dates = calendar;
    out.monthly.values.resize(T, spec.n_indicators + 1);
    for (int j = 0; j < spec.n_indicators; ++j) {
        out.monthly.names.push_back("ind" + std::to_string(j + 1));
        const double loading = 0.3 + 0.1 * j;
        for (int t = 0; t < T; ++t)
            out.monthly.values(t, j) =
                loading * g[static_cast<std::size_t>(t)] + spec.indicator_noise * rng.normal();
    }
    out.monthly.names.push_back("unemployment");
    for (int t = 0; t < T; ++t)
        out.monthly.values(t, spec.n_indicators) =
            spec.unemployment_loading * g[static_cast<std::size_t>(t)] +
            spec.indicator_noise * rng.normal();
    out.monthly.validate();

    out.truth.monthly_gdp = std::move(g);
    return out;
}

}  // namespace fsi
