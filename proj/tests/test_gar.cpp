#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "fsi/errors.hpp"
#include "fsi/gar.hpp"
#include "fsi/rng.hpp"

using namespace fsi;

namespace {

// Exact LP oracle for quantile regression with p regressors: the optimum
// passes through p data points, so enumerate all p-subsets, solve the
// interpolating system, and keep the basic solution with the smallest
// pinball objective.
Eigen::VectorXd qr_vertex_oracle(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, double tau,
                                 double* best_obj) {
    const int n = static_cast<int>(y.size());
    const int p = static_cast<int>(X.cols());
    Eigen::VectorXd best = Eigen::VectorXd::Zero(p);
    *best_obj = std::numeric_limits<double>::infinity();

    std::vector<int> idx(p);
    std::vector<int> comb(p);
    for (int i = 0; i < p; ++i) comb[i] = i;
    while (true) {
        Eigen::MatrixXd A(p, p);
        Eigen::VectorXd b(p);
        for (int i = 0; i < p; ++i) {
            A.row(i) = X.row(comb[i]);
            b(i) = y(comb[i]);
        }
        const Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
        if (lu.isInvertible()) {
            const Eigen::VectorXd beta = lu.solve(b);
            double obj = 0.0;
            for (int i = 0; i < n; ++i) obj += pinball_loss(y(i) - X.row(i).dot(beta), tau);
            if (obj < *best_obj) {
                *best_obj = obj;
                best = beta;
            }
        }
        // Next combination.
        int k = p - 1;
        while (k >= 0 && comb[k] == n - p + k) --k;
        if (k < 0) break;
        ++comb[k];
        for (int j = k + 1; j < p; ++j) comb[j] = comb[j - 1] + 1;
    }
    return best;
}

}  // namespace

TEST_CASE("pinball loss closed forms") {
    CHECK(pinball_loss(2.0, 0.25) == doctest::Approx(0.5));
    CHECK(pinball_loss(-2.0, 0.25) == doctest::Approx(1.5));
    CHECK(pinball_loss(0.0, 0.7) == doctest::Approx(0.0));
    CHECK(pinball_loss(1.0, 0.95) == doctest::Approx(0.95));
}

TEST_CASE("quantile score closed forms") {
    CHECK(quantile_score(1.0, 2.0, 0.5) == doctest::Approx(1.0));   // 2(1-0.5)(2-1)
    CHECK(quantile_score(3.0, 2.0, 0.5) == doctest::Approx(1.0));   // 2(0-0.5)(2-3)
    CHECK(quantile_score(1.0, 2.0, 0.05) == doctest::Approx(1.9));  // 2(0.95)(1)
    CHECK(quantile_score(2.0, 2.0, 0.3) == doctest::Approx(0.0));   // y == q
}

TEST_CASE("qr_fit intercept-only model returns the sample quantile") {
    Eigen::VectorXd y(7);
    y << 3, 1, 4, 1, 5, 9, 2;
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(7, 1);
    const QuantileFit f = qr_fit(y, X, 0.5);
    // The LP optimum for the median of an odd sample is the middle order
    // statistic.
    CHECK(f.coefficients(0) == doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("qr_fit matches the vertex-enumeration LP oracle") {
    Rng rng(2718);
    for (int rep = 0; rep < 25; ++rep) {
        const int n = 12 + rep % 14;
        const int p = 1 + rep % 3;
        Eigen::MatrixXd X = Eigen::MatrixXd::Ones(n, p);
        for (int i = 0; i < n; ++i)
            for (int j = 1; j < p; ++j) X(i, j) = rng.normal();
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) y(i) = 0.5 * X.row(i).sum() + rng.normal();
        const double tau = 0.1 + 0.2 * (rep % 5);

        double oracle_obj = 0.0;
        qr_vertex_oracle(y, X, tau, &oracle_obj);
        const QuantileFit f = qr_fit(y, X, tau);
        double fit_obj = 0.0;
        for (int i = 0; i < n; ++i)
            fit_obj += pinball_loss(y(i) - X.row(i).dot(f.coefficients), tau);
        CHECK(fit_obj <= oracle_obj * (1.0 + 1e-6) + 1e-9);
        CHECK(f.pinball_sum == doctest::Approx(fit_obj).epsilon(1e-6));
    }
}

TEST_CASE("qr_fit recovers a strong linear signal") {
    Rng rng(11);
    const int n = 800;
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = rng.normal();
        y(i) = 2.0 + 3.0 * X(i, 1) + 0.1 * rng.normal();
    }
    const QuantileFit f = qr_fit(y, X, 0.5);
    CHECK(f.coefficients(0) == doctest::Approx(2.0).epsilon(0.02));
    CHECK(f.coefficients(1) == doctest::Approx(3.0).epsilon(0.02));
}

TEST_CASE("qwcrps reduces to the quantile score on a single-point grid") {
    DensityForecast fc;
    fc.tau_grid = {0.3};
    fc.quantiles = {1.7};
    CHECK(qwcrps(fc, 2.5, CrpsWeight::Uniform) ==
          doctest::Approx(quantile_score(2.5, 1.7, 0.3)).epsilon(1e-12));
}

TEST_CASE("uniform qwcrps equals the grid Riemann sum of quantile scores") {
    DensityForecast fc;
    fc.tau_grid = default_tau_grid();
    for (double t : fc.tau_grid) fc.quantiles.push_back(-1.2 + 3.0 * t);
    const double y = 0.4;
    double direct = 0.0;
    for (std::size_t i = 0; i < fc.tau_grid.size(); ++i)
        direct += quantile_score(y, fc.quantiles[i], fc.tau_grid[i]);
    direct *= 0.05;  // grid spacing
    CHECK(qwcrps(fc, y, CrpsWeight::Uniform) == doctest::Approx(direct).epsilon(1e-12));

    // The left weight emphasizes low quantiles: both are positive and the
    // left score differs from the uniform one.
    CHECK(qwcrps(fc, y, CrpsWeight::Left) > 0.0);
    CHECK(qwcrps(fc, y, CrpsWeight::Left) != doctest::Approx(qwcrps(fc, y, CrpsWeight::Uniform)));
}

TEST_CASE("quantile_ic averages the per-tau information criteria") {
    QuantileFit a;
    a.tau = 0.25;
    a.pinball_sum = 10.0;
    a.n = 50;
    a.p = 2;
    QuantileFit b = a;
    b.tau = 0.75;
    b.pinball_sum = 20.0;
    const auto [aic, bic] = quantile_ic({a, b});
    const double aic_a = 2.0 * 50 * std::log(10.0 / 50) + 2.0 * 2;
    const double aic_b = 2.0 * 50 * std::log(20.0 / 50) + 2.0 * 2;
    CHECK(aic == doctest::Approx(0.5 * (aic_a + aic_b)).epsilon(1e-12));
    const double bic_a = 2.0 * 50 * std::log(10.0 / 50) + 2.0 * std::log(50.0);
    const double bic_b = 2.0 * 50 * std::log(20.0 / 50) + 2.0 * std::log(50.0);
    CHECK(bic == doctest::Approx(0.5 * (bic_a + bic_b)).epsilon(1e-12));

    QuantileFit zero = a;
    zero.pinball_sum = 0.0;
    CHECK_THROWS_AS(quantile_ic({zero}), NumericError);
}

TEST_CASE("pit interpolates the quantile grid and clamps the tails") {
    DensityForecast fc;
    fc.tau_grid = {0.25, 0.5, 0.75};
    fc.quantiles = {-1.0, 0.0, 1.0};
    CHECK(pit(fc, 0.0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(pit(fc, -0.5) == doctest::Approx(0.375).epsilon(1e-12));
    CHECK(pit(fc, 0.5) == doctest::Approx(0.625).epsilon(1e-12));
    CHECK(pit(fc, -100.0) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(pit(fc, 100.0) == doctest::Approx(1.0).epsilon(1e-9));
    // Monotone in y.
    double prev = -1.0;
    for (double y = -3.0; y <= 3.0; y += 0.1) {
        const double u = pit(fc, y);
        CHECK(u >= prev - 1e-12);
        CHECK(u >= 0.0);
        CHECK(u <= 1.0);
        prev = u;
    }
}

TEST_CASE("backtest separates an informative regressor from a placebo") {
    Rng rng(515);
    const int T = 360;
    std::vector<double> gdp(T);
    Eigen::MatrixXd risk(T, 1), placebo(T, 1);
    double state = 0.0;
    for (int t = 0; t < T; ++t) {
        state = 0.8 * state + rng.normal();
        risk(t, 0) = state;
        placebo(t, 0) = rng.normal();
        // Downside risk widens with the state: conditional left tail moves.
        const double shock = rng.normal();
        gdp[static_cast<std::size_t>(t)] =
            0.5 - 0.4 * state + (1.0 + 0.5 * std::max(state, 0.0)) * shock;
    }
    BacktestConfig cfg;
    const QuantileBacktestReport with_risk = backtest(gdp, risk, 1, cfg);
    const QuantileBacktestReport with_placebo = backtest(gdp, placebo, 1, cfg);
    CHECK(with_risk.qwcrps_left < with_placebo.qwcrps_left);
    CHECK(with_risk.qwcrps_uniform < with_placebo.qwcrps_uniform);
    CHECK(with_risk.ks_pass);
    CHECK(with_risk.origins_used > 100);
    CHECK(with_risk.pits.size() == static_cast<std::size_t>(with_risk.origins_used));
}

TEST_CASE("backtest horizon shifts the target") {
    Rng rng(99);
    const int T = 240;
    std::vector<double> gdp(T);
    for (int t = 0; t < T; ++t) gdp[static_cast<std::size_t>(t)] = rng.normal();
    const Eigen::MatrixXd none(T, 0);
    const QuantileBacktestReport h1 = backtest(gdp, none, 1);
    const QuantileBacktestReport h3 = backtest(gdp, none, 3);
    CHECK(h1.origins_used > h3.origins_used);
    CHECK(h1.horizon == 1);
    CHECK(h3.horizon == 3);
}
