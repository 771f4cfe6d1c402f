#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "fsi/errors.hpp"
#include "fsi/rng.hpp"
#include "fsi/transforms.hpp"

using namespace fsi;

TEST_CASE("cmax unit cases") {
    const std::vector<double> two = cmax({10.0, 8.0}, 2);
    CHECK(std::fabs(two[0] - 0.0) < 1e-12);
    CHECK(std::fabs(two[1] - 0.2) < 1e-12);

    std::vector<double> rising;
    for (int t = 0; t < 50; ++t) rising.push_back(1.0 + t);
    for (double v : cmax(rising, 7)) CHECK(v == 0.0);

    CHECK_THROWS_AS(cmax({1.0, -2.0, 3.0}, 2), DataError);
    CHECK_THROWS_AS(cmax({1.0, 2.0}, 0), ConfigError);
}

TEST_CASE("cmax matches a brute-force window maximum") {
    Rng rng(3);
    std::vector<double> x;
    for (int t = 0; t < 400; ++t) x.push_back(std::exp(0.2 * rng.normal()) + 0.5);
    const int W = 60;
    const std::vector<double> fast = cmax(x, W);
    for (int t = 0; t < 400; ++t) {
        double mx = 0.0;
        for (int j = 0; j <= std::min(t, W - 1); ++j) mx = std::max(mx, x[t - j]);
        CHECK(std::fabs(fast[t] - (1.0 - x[t] / mx)) < 1e-12);
        CHECK(fast[t] >= 0.0);
        CHECK(fast[t] < 1.0);
    }
}

TEST_CASE("ewsd of a constant series is zero after burn-in") {
    const std::vector<double> x(120, 7.5);
    const std::vector<double> v = ewsd(x, 0.94);
    for (int t = 0; t < 20; ++t) CHECK(std::isnan(v[t]));
    for (std::size_t t = 20; t < v.size(); ++t) CHECK(std::fabs(v[t]) < 1e-12);
}

TEST_CASE("ewsd matches the explicit weighted-sum formula") {
    Rng rng(9);
    std::vector<double> price{100.0};
    for (int t = 1; t < 500; ++t) price.push_back(price.back() * std::exp(0.01 * rng.normal()));
    const double decay = 0.94;
    const std::vector<double> fast = ewsd(price, decay);

    std::vector<double> dl;
    for (std::size_t t = 1; t < price.size(); ++t) dl.push_back(std::log(price[t] / price[t - 1]));
    for (std::size_t t = 21; t < price.size(); ++t) {
        const std::size_t i = t - 1;  // log-change index of time t
        const std::size_t lookback = std::min<std::size_t>(i + 1, 300);
        double sw = 0.0, swx = 0.0;
        for (std::size_t j = 0; j < lookback; ++j) {
            const double w = std::pow(decay, static_cast<double>(j));
            sw += w;
            swx += w * dl[i - j];
        }
        const double mean = swx / sw;
        double sw2 = 0.0, num = 0.0;
        for (std::size_t j = 0; j < lookback; ++j) {
            const double w = std::pow(decay, static_cast<double>(j));
            sw2 += w * w;
            num += w * (dl[i - j] - mean) * (dl[i - j] - mean);
        }
        const double direct = std::sqrt(num / (sw - sw2 / sw));
        CHECK(std::fabs(fast[t] - direct) < 1e-10);
    }
}

TEST_CASE("ewsd is invariant to positive rescaling of prices") {
    Rng rng(17);
    std::vector<double> price{50.0};
    for (int t = 1; t < 200; ++t) price.push_back(price.back() * std::exp(0.02 * rng.normal()));
    std::vector<double> scaled;
    for (double p : price) scaled.push_back(3.7 * p);
    const std::vector<double> a = ewsd(price), b = ewsd(scaled);
    for (std::size_t t = 21; t < a.size(); ++t) CHECK(std::fabs(a[t] - b[t]) < 1e-12);
}

TEST_CASE("ewsd input validation") {
    CHECK_THROWS_AS(ewsd({1.0, -1.0, 2.0}), DataError);
    CHECK_THROWS_AS(ewsd({1.0, 2.0, 3.0}, 1.0), ConfigError);
    CHECK_THROWS_AS(ewsd({1.0, 2.0, 3.0}, 0.0), ConfigError);
}

TEST_CASE("corp_spread is an elementwise difference") {
    const std::vector<double> s = corp_spread({5.0, 4.0}, {3.5, 4.0});
    CHECK(s[0] == doctest::Approx(1.5));
    CHECK(s[1] == doctest::Approx(0.0));
    CHECK_THROWS_AS(corp_spread({1.0}, {1.0, 2.0}), DataError);
}

TEST_CASE("adf t-ratio equals the closed-form OLS t-ratio on a tiny series") {
    Rng seed_rng(41);
    std::vector<double> x;
    for (int t = 0; t < 12; ++t) x.push_back(t % 2 == 0 ? 1.0 + 0.3 * seed_rng.normal() : 2.0 + 0.3 * seed_rng.normal());
    const AdfResult res = adf_test(x, AdfSpec::Constant, 0, AdfLagRule::Fixed);

    // Hand OLS of dx_t on [1, x_{t-1}].
    const int n = static_cast<int>(x.size()) - 1;
    Eigen::MatrixXd Z(n, 2);
    Eigen::VectorXd dy(n);
    for (int t = 0; t < n; ++t) {
        Z(t, 0) = 1.0;
        Z(t, 1) = x[static_cast<std::size_t>(t)];
        dy(t) = x[static_cast<std::size_t>(t + 1)] - x[static_cast<std::size_t>(t)];
    }
    const Eigen::MatrixXd xtx_inv = (Z.transpose() * Z).inverse();
    const Eigen::VectorXd beta = xtx_inv * Z.transpose() * dy;
    const Eigen::VectorXd resid = dy - Z * beta;
    const double s2 = resid.squaredNorm() / (n - 2);
    const double t_ratio = beta(1) / std::sqrt(s2 * xtx_inv(1, 1));
    CHECK(res.statistic == doctest::Approx(t_ratio).epsilon(1e-8));
    CHECK(res.lags_used == 0);
}

TEST_CASE("adf Monte Carlo size and power") {
    int reject_noise = 0, accept_walk = 0;
    const int reps = 200, T = 500;
    for (int rep = 0; rep < reps; ++rep) {
        Rng rng(1000 + static_cast<std::uint64_t>(rep));
        std::vector<double> noise, walk;
        double w = 0.0;
        for (int t = 0; t < T; ++t) {
            noise.push_back(rng.normal());
            w += rng.normal();
            walk.push_back(w);
        }
        if (adf_test(noise).p_value < 0.05) ++reject_noise;
        if (adf_test(walk).p_value > 0.05) ++accept_walk;
    }
    CHECK(reject_noise >= static_cast<int>(0.95 * reps));
    CHECK(accept_walk >= static_cast<int>(0.90 * reps));
}

TEST_CASE("MacKinnon p-values: reference points, monotonicity, clamping") {
    // Classic 5%/1% critical values for the constant-only case.
    CHECK(mackinnon_p(-2.86, AdfSpec::Constant) == doctest::Approx(0.05).epsilon(0.02));
    CHECK(mackinnon_p(-3.43, AdfSpec::Constant) == doctest::Approx(0.01).epsilon(0.05));
    CHECK(mackinnon_p(-3.41, AdfSpec::ConstantTrend) == doctest::Approx(0.05).epsilon(0.02));

    double prev = 0.0;
    for (double stat = -8.0; stat <= 4.0; stat += 0.05) {
        const double p = mackinnon_p(stat, AdfSpec::Constant);
        CHECK(p >= prev - 1e-12);
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
        prev = p;
    }

    // A very negative statistic hits the reporting floor and is flagged.
    std::vector<double> strong;
    Rng rng(4);
    for (int t = 0; t < 300; ++t) strong.push_back(rng.normal());
    const AdfResult res = adf_test(strong, AdfSpec::Constant, 0, AdfLagRule::Fixed);
    if (res.p_value <= 0.001) CHECK(res.p_value_clamped);
}

TEST_CASE("adf rejects missing interior values and too-short series") {
    std::vector<double> x(100, 0.0);
    Rng rng(2);
    for (double& v : x) v = rng.normal();
    x[50] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(adf_test(x), DataError);
    CHECK_THROWS_AS(adf_test(std::vector<double>{1, 2, 3}), DataError);
}

TEST_CASE("adf BIC lag selection respects the Schwert bound") {
    Rng rng(8);
    std::vector<double> x;
    double prev = 0.0;
    for (int t = 0; t < 200; ++t) {
        prev = 0.5 * prev + rng.normal();
        x.push_back(prev);
    }
    const AdfResult res = adf_test(x, AdfSpec::Constant, -1, AdfLagRule::Bic);
    const int bound = static_cast<int>(12.0 * std::pow(200 / 100.0, 0.25));
    CHECK(res.lags_used >= 0);
    CHECK(res.lags_used <= bound);
}
