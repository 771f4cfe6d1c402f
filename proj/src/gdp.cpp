#include "fsi/gdp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fsi/errors.hpp"
#include "fsi/rng.hpp"
#include "fsi/statespace.hpp"

namespace fsi {

double xi_ratio(double var_gdp, double var_gdp_i) {
    if (!(var_gdp > 0.0) || !(var_gdp_i > 0.0))
        throw NumericError("xi_ratio: variances must be positive");
    return var_gdp / var_gdp_i;
}

TimeSeriesPanel transform_indicators(const TimeSeriesPanel& panel,
                                     const std::vector<IndicatorTransform>& roles) {
    if (roles.size() != static_cast<std::size_t>(panel.cols()))
        throw ConfigError("transform_indicators: one role per column required");
    const bool any_growth =
        std::any_of(roles.begin(), roles.end(),
                    [](IndicatorTransform r) { return r == IndicatorTransform::GrowthRate; });
    const Eigen::Index start = any_growth ? 1 : 0;
    TimeSeriesPanel out;
    out.names = panel.names;
    out.frequency = panel.frequency;
    out.dates.assign(panel.dates.begin() + start, panel.dates.end());
    out.values.resize(panel.rows() - start, panel.cols());
    for (Eigen::Index j = 0; j < panel.cols(); ++j) {
        for (Eigen::Index t = start; t < panel.rows(); ++t) {
            const double v = panel.values(t, j);
            if (roles[static_cast<std::size_t>(j)] == IndicatorTransform::Level) {
                out.values(t - start, j) = v;
            } else {
                const double prev = panel.values(t - 1, j);
                if (is_missing(v) || is_missing(prev)) {
                    out.values(t - start, j) = missing_value();
                } else {
                    if (!(v > 0.0) || !(prev > 0.0))
                        throw DataError("transform_indicators: nonpositive level in '" +
                                        panel.names[static_cast<std::size_t>(j)] + "'");
                    out.values(t - start, j) = 100.0 * std::log(v / prev);
                }
            }
        }
    }
    out.validate();
    return out;
}

MixedFrequencyGdpModel build_mf_model(const TimeSeriesPanel& quarterly,
                                      const TimeSeriesPanel& monthly,
                                      const MfModelConfig& config) {
    if (quarterly.cols() != 2)
        throw DataError("build_mf_model: quarterly panel must have two columns");
    if (monthly.has_missing()) throw DataError("build_mf_model: monthly panel has missing cells");
    const int T = static_cast<int>(monthly.rows());
    const int Q = static_cast<int>(quarterly.rows());
    if (Q * 3 > T) throw DataError("build_mf_model: more quarters than the monthly span");

    MixedFrequencyGdpModel model;
    model.months = monthly.dates;
    model.xi = config.xi;
    model.gdp_p = Eigen::VectorXd::Constant(T, missing_value());
    model.gdp_e = Eigen::VectorXd::Constant(T, missing_value());
    for (int q = 0; q < Q; ++q) {
        const int t = 3 * q + 2;  // quarter-end month
        if (t >= T || !(quarterly.dates[static_cast<std::size_t>(q)] ==
                        monthly.dates[static_cast<std::size_t>(t)]))
            throw DataError("build_mf_model: quarterly date " +
                            quarterly.dates[static_cast<std::size_t>(q)].to_iso() +
                            " does not land on a quarter-end month");
        model.gdp_p(t) = quarterly.values(q, 0);
        model.gdp_e(t) = quarterly.values(q, 1);
    }

    const int k = static_cast<int>(monthly.cols()) - (config.include_unemployment ? 1 : 0);
    if (k < 0) throw DataError("build_mf_model: monthly panel too narrow");
    model.indicators = monthly.values.leftCols(k);
    model.unemployment = config.include_unemployment
                             ? Eigen::VectorXd(monthly.values.rightCols(1))
                             : Eigen::VectorXd();

    // Moment-based starting values.
    double var_q = 1.0;
    {
        Eigen::VectorXd gp(Q);
        for (int q = 0; q < Q; ++q) gp(q) = quarterly.values(q, 0);
        const double mean = gp.mean();
        var_q = (gp.array() - mean).square().sum() / std::max(Q - 1, 1);
    }
    model.rho = 0.5;
    model.gamma = Eigen::VectorXd::Zero(k);
    model.sigma2_g = std::max(var_q / 3.0, 1e-6);
    model.sigma2_p = config.fixed_sigma2_p.value_or(std::max(0.3 * var_q, 1e-6));
    model.sigma2_e = config.fixed_sigma2_e.value_or(std::max(0.3 * var_q, 1e-6));
    if (model.unemployment.size() > 0) {
        const double mean = model.unemployment.mean();
        model.u_intercept = mean;
        model.u_loading = 0.0;
        model.sigma2_u = std::max(
            (model.unemployment.array() - mean).square().sum() / std::max(T - 1, 1), 1e-6);
    }
    return model;
}

namespace {

struct GibbsState {
    double rho;
    Eigen::VectorXd gamma;
    double sigma2_g, sigma2_p, sigma2_e;
    double u_intercept, u_loading, sigma2_u;
};

// Assemble the companion state-space (r=1, p=3) for the current parameters.
// Observation columns: unemployment (intercept removed), gdp_p, gdp_e.
StateSpaceModel make_model(const MixedFrequencyGdpModel& mf, const GibbsState& gs) {
    StateSpaceModel m;
    m.r = 1;
    m.p = 3;
    m.transition = Eigen::MatrixXd::Zero(3, 3);
    m.transition(0, 0) = gs.rho;
    m.transition(1, 0) = 1.0;
    m.transition(2, 1) = 1.0;
    m.Q = Eigen::MatrixXd::Constant(1, 1, gs.sigma2_g);
    const bool has_u = mf.unemployment.size() > 0;
    const int rows = has_u ? 3 : 2;
    m.measurement = Eigen::MatrixXd::Zero(rows, 3);
    m.sigma_eps = Eigen::VectorXd::Zero(rows);
    int idx = 0;
    if (has_u) {
        m.measurement(idx, 0) = gs.u_loading;
        m.sigma_eps(idx) = std::max(gs.sigma2_u, 1e-14);
        ++idx;
    }
    m.measurement.row(idx) << 1.0, 1.0, 1.0;
    m.sigma_eps(idx) = std::max(gs.sigma2_p, 1e-14);
    ++idx;
    m.measurement.row(idx) << 1.0, 1.0, 1.0;
    m.sigma_eps(idx) = std::max(gs.sigma2_e, 1e-14);
    m.intercept = Eigen::VectorXd::Zero(1);
    m.init_mean = Eigen::VectorXd::Zero(3);
    m.init_cov = 25.0 * Eigen::MatrixXd::Identity(3, 3);
    return m;
}

}  // namespace

MonthlyGdpPosterior reconcile_gibbs(const MixedFrequencyGdpModel& mf,
                                    const ReconcileOptions& opts) {
    if (opts.n_draws < 1) throw ConfigError("reconcile_gibbs: n_draws must be >= 1");
    const int T = mf.months_count();
    const int k = static_cast<int>(mf.indicators.cols());
    const bool has_u = mf.unemployment.size() > 0;
    Rng rng(opts.seed);

    GibbsState gs{mf.rho,     mf.gamma,       mf.sigma2_g, mf.sigma2_p,
                  mf.sigma2_e, mf.u_intercept, mf.u_loading, mf.sigma2_u};
    if (opts.fixed_sigma2_p) gs.sigma2_p = *opts.fixed_sigma2_p;
    if (opts.fixed_sigma2_e) gs.sigma2_e = *opts.fixed_sigma2_e;

    // Observation panel for the generic filter.
    TimeSeriesPanel obs;
    obs.dates = mf.months;
    obs.frequency = Frequency::Monthly;
    if (has_u) obs.names.push_back("u");
    obs.names.push_back("gdp_p");
    obs.names.push_back("gdp_e");
    obs.values.resize(T, has_u ? 3 : 2);

    std::vector<int> quarter_ends;
    for (int t = 0; t < T; ++t)
        if (!is_missing(mf.gdp_p(t))) quarter_ends.push_back(t);
    const int Q = static_cast<int>(quarter_ends.size());

    // Weakly informative, data-scaled priors: each variance gets an
    // inverse-gamma prior whose mean is the moment-based starting value
    // (shape 2 => prior weight of about two observations).
    constexpr double kIgShape = 2.0;
    constexpr double kCoefPriorVar = 10.0;
    const double scale_g = gs.sigma2_g;
    const double scale_p = gs.sigma2_p;
    const double scale_e = gs.sigma2_e;
    const double scale_u = gs.sigma2_u;

    Eigen::MatrixXd path_draws(opts.n_draws, T);
    int xi_rejections = 0;
    long long xi_accepted = 0;
    double acc_rho = 0.0, acc_s2g = 0.0, acc_s2p = 0.0, acc_s2e = 0.0;
    double acc_xip = 0.0, acc_xie = 0.0, acc_ul = 0.0;
    double xi_p_min = 0.0, xi_p_max = 0.0, xi_e_min = 0.0, xi_e_max = 0.0;
    Eigen::VectorXd acc_gamma = Eigen::VectorXd::Zero(k);

    const int total = opts.burn_in + opts.n_draws;
    for (int sweep = 0; sweep < total; ++sweep) {
        // Fill the observation panel (unemployment has its intercept removed).
        for (int t = 0; t < T; ++t) {
            int c = 0;
            if (has_u) obs.values(t, c++) = mf.unemployment(t) - gs.u_intercept;
            obs.values(t, c++) = mf.gdp_p(t);
            obs.values(t, c++) = mf.gdp_e(t);
        }
        StateSpaceModel model = make_model(mf, gs);
        Eigen::MatrixXd intercept(T, 1);
        for (int t = 0; t < T; ++t) intercept(t, 0) = k > 0 ? mf.indicators.row(t).dot(gs.gamma) : 0.0;
        model.init_mean(0) = intercept(0, 0);

        const FilterResult filt = kalman_filter(model, obs, &intercept);
        const Eigen::MatrixXd path_mat = ffbs_draw_states(model, filt, rng, &intercept);
        const Eigen::VectorXd g = path_mat.col(0);

        if (opts.sample_parameters) {
            // (rho, gamma) | g: regression g_t on (g_{t-1}, X_t).
            {
                const int n = T - 1;
                Eigen::MatrixXd Z(n, 1 + k);
                Eigen::VectorXd y(n);
                for (int t = 1; t < T; ++t) {
                    Z(t - 1, 0) = g(t - 1);
                    for (int j = 0; j < k; ++j) Z(t - 1, 1 + j) = mf.indicators(t, j);
                    y(t - 1) = g(t);
                }
                const Eigen::MatrixXd prior =
                    Eigen::MatrixXd::Identity(1 + k, 1 + k) / kCoefPriorVar;
                const Eigen::MatrixXd V =
                    (Z.transpose() * Z / gs.sigma2_g + prior).inverse();
                const Eigen::VectorXd mean = V * Z.transpose() * y / gs.sigma2_g;
                Eigen::LLT<Eigen::MatrixXd> llt(V);
                Eigen::VectorXd coef;
                for (int attempt = 0;; ++attempt) {
                    Eigen::VectorXd zv(1 + k);
                    for (int i = 0; i < 1 + k; ++i) zv(i) = rng.normal();
                    coef = mean + llt.matrixL() * zv;
                    if (std::fabs(coef(0)) < 1.0) break;
                    if (attempt >= 100) {
                        coef(0) = std::copysign(0.99, coef(0));
                        break;
                    }
                }
                gs.rho = coef(0);
                gs.gamma = coef.tail(k);
                const Eigen::VectorXd resid = y - Z * coef;
                gs.sigma2_g = rng.inverse_gamma(kIgShape + 0.5 * n,
                                                scale_g + 0.5 * resid.squaredNorm());
            }

            // Unemployment measurement parameters.
            if (has_u) {
                Eigen::MatrixXd Z(T, 2);
                for (int t = 0; t < T; ++t) {
                    Z(t, 0) = 1.0;
                    Z(t, 1) = g(t);
                }
                const Eigen::MatrixXd prior = Eigen::MatrixXd::Identity(2, 2) / kCoefPriorVar;
                const Eigen::MatrixXd V = (Z.transpose() * Z / gs.sigma2_u + prior).inverse();
                const Eigen::VectorXd mean = V * Z.transpose() * mf.unemployment / gs.sigma2_u;
                Eigen::LLT<Eigen::MatrixXd> llt(V);
                Eigen::VectorXd zv(2);
                zv << rng.normal(), rng.normal();
                const Eigen::VectorXd coef = mean + llt.matrixL() * zv;
                gs.u_intercept = coef(0);
                gs.u_loading = coef(1);
                const Eigen::VectorXd resid = mf.unemployment - Z * coef;
                gs.sigma2_u = rng.inverse_gamma(kIgShape + 0.5 * T,
                                                scale_u + 0.5 * resid.squaredNorm());
            }

            // Measurement noise variances under the xi interval constraint.
            // xi_i = var(GDP)/var(GDP_i) with var(GDP_i) = var(agg) + sigma2_i.
            if (Q > 2) {
                Eigen::VectorXd agg(Q);
                for (int q = 0; q < Q; ++q) {
                    const int t = quarter_ends[static_cast<std::size_t>(q)];
                    agg(q) = g(t) + (t >= 1 ? g(t - 1) : 0.0) + (t >= 2 ? g(t - 2) : 0.0);
                }
                const double var_agg =
                    (agg.array() - agg.mean()).square().sum() / (Q - 1);

                auto draw_sigma = [&](const Eigen::VectorXd& gdp_obs,
                                      std::optional<double> fixed, double prior_scale) {
                    if (fixed) return *fixed;
                    double ssr = 0.0;
                    for (int q = 0; q < Q; ++q) {
                        const int t = quarter_ends[static_cast<std::size_t>(q)];
                        const double e = gdp_obs(t) - agg(q);
                        ssr += e * e;
                    }
                    for (int attempt = 0; attempt < 1000; ++attempt) {
                        const double draw =
                            rng.inverse_gamma(kIgShape + 0.5 * Q, prior_scale + 0.5 * ssr);
                        const double xi = xi_ratio(var_agg, var_agg + draw);
                        if (xi > mf.xi.lo && xi < mf.xi.hi) {
                            ++xi_accepted;
                            return draw;
                        }
                        ++xi_rejections;
                    }
                    throw NumericError(
                        "reconcile_gibbs: xi acceptance below 0.1%; priors inconsistent with "
                        "the interval");
                };
                gs.sigma2_p = draw_sigma(mf.gdp_p, opts.fixed_sigma2_p, scale_p);
                gs.sigma2_e = draw_sigma(mf.gdp_e, opts.fixed_sigma2_e, scale_e);
            }
        }

        if (sweep >= opts.burn_in) {
            path_draws.row(sweep - opts.burn_in) = g.transpose();
            acc_rho += gs.rho;
            acc_s2g += gs.sigma2_g;
            acc_s2p += gs.sigma2_p;
            acc_s2e += gs.sigma2_e;
            acc_ul += gs.u_loading;
            acc_gamma += gs.gamma;
            if (Q > 2) {
                Eigen::VectorXd agg(Q);
                for (int q = 0; q < Q; ++q) {
                    const int t = quarter_ends[static_cast<std::size_t>(q)];
                    agg(q) = g(t) + (t >= 1 ? g(t - 1) : 0.0) + (t >= 2 ? g(t - 2) : 0.0);
                }
                const double var_agg = (agg.array() - agg.mean()).square().sum() / (Q - 1);
                const double xip = var_agg / (var_agg + gs.sigma2_p);
                const double xie = var_agg / (var_agg + gs.sigma2_e);
                acc_xip += xip;
                acc_xie += xie;
                if (sweep == opts.burn_in) {
                    xi_p_min = xi_p_max = xip;
                    xi_e_min = xi_e_max = xie;
                } else {
                    xi_p_min = std::min(xi_p_min, xip);
                    xi_p_max = std::max(xi_p_max, xip);
                    xi_e_min = std::min(xi_e_min, xie);
                    xi_e_max = std::max(xi_e_max, xie);
                }
            }
        }
    }

    const double acc_rate =
        xi_accepted + xi_rejections > 0
            ? static_cast<double>(xi_accepted) / (xi_accepted + xi_rejections)
            : 1.0;
    if (opts.sample_parameters && acc_rate < 0.01)
        throw NumericError("reconcile_gibbs: xi acceptance rate below 1%");

    MonthlyGdpPosterior post;
    post.months = mf.months;
    post.draws = opts.n_draws;
    post.xi_rejections = xi_rejections;
    post.xi_acceptance_rate = acc_rate;
    const double nd = static_cast<double>(opts.n_draws);
    post.rho = acc_rho / nd;
    post.sigma2_g = acc_s2g / nd;
    post.sigma2_p = acc_s2p / nd;
    post.sigma2_e = acc_s2e / nd;
    post.xi_p = acc_xip / nd;
    post.xi_e = acc_xie / nd;
    post.xi_p_min = xi_p_min;
    post.xi_p_max = xi_p_max;
    post.xi_e_min = xi_e_min;
    post.xi_e_max = xi_e_max;
    post.u_loading = acc_ul / nd;
    post.gamma = acc_gamma / nd;
    post.mean.resize(static_cast<std::size_t>(T));
    post.median.resize(static_cast<std::size_t>(T));
    post.q05.resize(static_cast<std::size_t>(T));
    post.q95.resize(static_cast<std::size_t>(T));
    std::vector<double> col(static_cast<std::size_t>(opts.n_draws));
    for (int t = 0; t < T; ++t) {
        for (int d = 0; d < opts.n_draws; ++d) col[static_cast<std::size_t>(d)] = path_draws(d, t);
        std::sort(col.begin(), col.end());
        const auto quant = [&](double p) {
            const double pos = p * (col.size() - 1);
            const std::size_t lo = static_cast<std::size_t>(pos);
            const std::size_t hi = std::min(lo + 1, col.size() - 1);
            return col[lo] + (pos - lo) * (col[hi] - col[lo]);
        };
        post.mean[static_cast<std::size_t>(t)] = path_draws.col(t).mean();
        post.median[static_cast<std::size_t>(t)] = quant(0.5);
        post.q05[static_cast<std::size_t>(t)] = quant(0.05);
        post.q95[static_cast<std::size_t>(t)] = quant(0.95);
    }
    return post;
}

}  // namespace fsi
