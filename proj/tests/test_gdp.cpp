#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "fsi/errors.hpp"
#include "fsi/gdp.hpp"
#include "fsi/panel.hpp"
#include "fsi/synth.hpp"

using namespace fsi;

TEST_CASE("xi_ratio arithmetic and validation") {
    CHECK(xi_ratio(0.7, 1.0) == doctest::Approx(0.7));
    CHECK(xi_ratio(3.0, 2.0) == doctest::Approx(1.5));
    CHECK_THROWS_AS(xi_ratio(1.0, 0.0), NumericError);
    CHECK_THROWS_AS(xi_ratio(1.0, -2.0), NumericError);
}

TEST_CASE("build_mf_model places quarterly readings at quarter-end months") {
    MfGdpSpec spec;
    spec.months = 120;
    spec.seed = 8;
    const MfGdpData data = gen_mf_gdp(spec);
    const MixedFrequencyGdpModel model = build_mf_model(data.quarterly, data.monthly);

    CHECK(model.months_count() == 120);
    CHECK(model.indicators.cols() == spec.n_indicators);
    for (int t = 0; t < 120; ++t) {
        const bool quarter_end = t % 3 == 2;
        CHECK(std::isfinite(model.gdp_p(t)) == quarter_end);
        CHECK(std::isfinite(model.gdp_e(t)) == quarter_end);
        CHECK(std::isfinite(model.unemployment(t)));
    }
    // Starting values are positive variances and a stationary rho.
    CHECK(model.sigma2_g > 0.0);
    CHECK(model.sigma2_p > 0.0);
    CHECK(model.sigma2_e > 0.0);
    CHECK(std::fabs(model.rho) < 1.0);
    CHECK(model.gamma.size() == spec.n_indicators);
}

TEST_CASE("build_mf_model rejects misaligned calendars") {
    MfGdpSpec spec;
    spec.months = 60;
    spec.seed = 9;
    const MfGdpData data = gen_mf_gdp(spec);
    TimeSeriesPanel bad_quarterly = data.quarterly;
    bad_quarterly.dates[0].month += 1;  // no longer a month in the monthly calendar
    CHECK_THROWS_AS(build_mf_model(bad_quarterly, data.monthly), DataError);

    TimeSeriesPanel one_col = data.quarterly;
    one_col.values.conservativeResize(Eigen::NoChange, 1);
    one_col.names.pop_back();
    CHECK_THROWS_AS(build_mf_model(one_col, data.monthly), DataError);
}

TEST_CASE("build_mf_model without unemployment uses every monthly column") {
    MfGdpSpec spec;
    spec.months = 60;
    spec.seed = 12;
    const MfGdpData data = gen_mf_gdp(spec);
    MfModelConfig cfg;
    cfg.include_unemployment = false;
    const MixedFrequencyGdpModel model = build_mf_model(data.quarterly, data.monthly, cfg);
    CHECK(model.indicators.cols() == data.monthly.values.cols());
    CHECK(model.u_loading == doctest::Approx(0.0));
}

TEST_CASE("transform_indicators takes log growth for activity series") {
    TimeSeriesPanel p;
    p.dates = monthly_calendar(Date{2010, 1, 1}, 4);
    p.names = {"activity", "rate"};
    p.values.resize(4, 2);
    p.values << 100.0, 1.5, 110.0, 1.6, 121.0, 1.7, 133.1, 1.8;
    const TimeSeriesPanel out =
        transform_indicators(p, {IndicatorTransform::GrowthRate, IndicatorTransform::Level});
    REQUIRE(out.values.rows() == 3);  // first row dropped
    const double g = 100.0 * std::log(1.1);
    for (int t = 0; t < 3; ++t) CHECK(out.values(t, 0) == doctest::Approx(g).epsilon(1e-12));
    CHECK(out.values(0, 1) == doctest::Approx(1.6));
    CHECK(out.values(2, 1) == doctest::Approx(1.8));

    TimeSeriesPanel neg = p;
    neg.values(2, 0) = -1.0;
    CHECK_THROWS_AS(transform_indicators(neg, {IndicatorTransform::GrowthRate,
                                               IndicatorTransform::Level}),
                    DataError);
}

TEST_CASE("degenerate measurement noise pins quarterly aggregates") {
    // With both quarterly noise variances fixed near zero and equal, every
    // posterior draw must aggregate to the precision-weighted combination of
    // the two quarterly readings, i.e. their simple average.
    MfGdpSpec spec;
    spec.months = 144;
    spec.xi_p = 0.999;
    spec.xi_e = 0.999;
    spec.seed = 21;
    MfGdpData data = gen_mf_gdp(spec);
    const MixedFrequencyGdpModel model = build_mf_model(data.quarterly, data.monthly);

    ReconcileOptions opts;
    opts.n_draws = 400;
    opts.burn_in = 100;
    opts.seed = 7;
    opts.fixed_sigma2_p = 1e-10;
    opts.fixed_sigma2_e = 1e-10;
    const MonthlyGdpPosterior post = reconcile_gibbs(model, opts);

    for (int q = 0; q < 48; ++q) {
        const int t = 3 * q + 2;
        if (!std::isfinite(model.gdp_p(t))) continue;
        const double agg = post.mean[static_cast<std::size_t>(t)] +
                           post.mean[static_cast<std::size_t>(t - 1)] +
                           post.mean[static_cast<std::size_t>(t - 2)];
        CHECK(std::fabs(agg - 0.5 * (model.gdp_p(t) + model.gdp_e(t))) < 1e-4);
    }
}

TEST_CASE("posterior credible bands stay ordered and cover the truth") {
    MfGdpSpec spec;
    spec.months = 240;
    spec.seed = 3;
    const MfGdpData data = gen_mf_gdp(spec);
    const MixedFrequencyGdpModel model = build_mf_model(data.quarterly, data.monthly);

    ReconcileOptions opts;
    opts.n_draws = 1500;
    opts.burn_in = 400;
    opts.seed = 17;
    const MonthlyGdpPosterior post = reconcile_gibbs(model, opts);
    REQUIRE(post.mean.size() == static_cast<std::size_t>(model.months_count()));

    int covered = 0;
    const int T = model.months_count();
    for (int t = 0; t < T; ++t) {
        CHECK(post.q05[static_cast<std::size_t>(t)] <= post.median[static_cast<std::size_t>(t)]);
        CHECK(post.median[static_cast<std::size_t>(t)] <= post.q95[static_cast<std::size_t>(t)]);
        const double truth = data.truth.monthly_gdp[static_cast<std::size_t>(t)];
        if (truth >= post.q05[static_cast<std::size_t>(t)] &&
            truth <= post.q95[static_cast<std::size_t>(t)])
            ++covered;
    }
    CHECK(covered >= static_cast<int>(0.8 * T));
    CHECK(post.xi_acceptance_rate > 0.01);
    CHECK(std::fabs(post.rho) < 1.0);
    CHECK(post.sigma2_g > 0.0);

    // The posterior path beats the flat within-quarter interpolation of the
    // production-side readings.
    double rmse_post = 0.0, rmse_flat = 0.0;
    int n_used = 0;
    for (int t = 0; t < T; ++t) {
        const int quarter_end = (t / 3) * 3 + 2;
        if (quarter_end >= T || !std::isfinite(model.gdp_p(quarter_end))) continue;
        const double truth = data.truth.monthly_gdp[static_cast<std::size_t>(t)];
        const double flat = model.gdp_p(quarter_end) / 3.0;
        rmse_post += std::pow(post.mean[static_cast<std::size_t>(t)] - truth, 2);
        rmse_flat += std::pow(flat - truth, 2);
        ++n_used;
    }
    rmse_post = std::sqrt(rmse_post / n_used);
    rmse_flat = std::sqrt(rmse_flat / n_used);
    CHECK(rmse_post < rmse_flat);
}

TEST_CASE("reconcile_gibbs is deterministic for a fixed seed") {
    MfGdpSpec spec;
    spec.months = 96;
    spec.seed = 4;
    const MfGdpData data = gen_mf_gdp(spec);
    const MixedFrequencyGdpModel model = build_mf_model(data.quarterly, data.monthly);

    ReconcileOptions opts;
    opts.n_draws = 200;
    opts.burn_in = 50;
    opts.seed = 42;
    const MonthlyGdpPosterior a = reconcile_gibbs(model, opts);
    const MonthlyGdpPosterior b = reconcile_gibbs(model, opts);
    for (std::size_t t = 0; t < a.mean.size(); ++t) {
        CHECK(a.mean[t] == b.mean[t]);
        CHECK(a.q05[t] == b.q05[t]);
        CHECK(a.q95[t] == b.q95[t]);
    }
    CHECK(a.rho == b.rho);
    CHECK(a.sigma2_g == b.sigma2_g);

    ReconcileOptions opts2 = opts;
    opts2.seed = 43;
    const MonthlyGdpPosterior c = reconcile_gibbs(model, opts2);
    double diff = 0.0;
    for (std::size_t t = 0; t < a.mean.size(); ++t) diff += std::fabs(a.mean[t] - c.mean[t]);
    CHECK(diff > 0.0);
}

TEST_CASE("xi interval rejection reports its acceptance rate") {
    MfGdpSpec spec;
    spec.months = 144;
    spec.seed = 11;
    const MfGdpData data = gen_mf_gdp(spec);
    MfModelConfig cfg;
    cfg.xi = XiInterval{0.35, 1.15};
    const MixedFrequencyGdpModel model = build_mf_model(data.quarterly, data.monthly, cfg);

    ReconcileOptions opts;
    opts.n_draws = 400;
    opts.burn_in = 100;
    opts.seed = 5;
    const MonthlyGdpPosterior post = reconcile_gibbs(model, opts);
    CHECK(post.xi_acceptance_rate <= 1.0);
    CHECK(post.xi_acceptance_rate > 0.01);
    CHECK(post.xi_p > 0.35);
    CHECK(post.xi_p < 1.15);
    CHECK(post.xi_e > 0.35);
    CHECK(post.xi_e < 1.15);
}
