#include "fsi/gar.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fsi/errors.hpp"
#include "fsi/stats.hpp"

namespace fsi {

double pinball_loss(double residual, double tau) {
    return residual >= 0.0 ? tau * residual : (tau - 1.0) * residual;
}

double quantile_score(double y, double q, double tau) {
    return 2.0 * ((y < q ? 1.0 : 0.0) - tau) * (q - y);
}

QuantileFit qr_fit(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, double tau) {
    const int n = static_cast<int>(X.rows());
    const int p = static_cast<int>(X.cols());
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("qr_fit: tau must be in (0,1)");
    if (n <= p + 2) throw DataError("qr_fit: need n > p + 2");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> rank_check(X);
    if (rank_check.rank() < p) throw NumericError("qr_fit: rank-deficient design matrix");

    // Frisch-Newton interior point on the dual LP:
    //   max y'a  s.t.  X'a = (1-tau) X'1,  0 <= a <= 1.
    // beta re-emerges as the multiplier on the equality constraint.
    Eigen::VectorXd beta = rank_check.solve(y);
    Eigen::VectorXd r = y - X * beta;
    Eigen::VectorXd a = Eigen::VectorXd::Constant(n, 1.0 - tau);
    Eigen::VectorXd s = Eigen::VectorXd::Constant(n, tau);
    const double delta = 1e-3 + 0.1 * r.cwiseAbs().maxCoeff();
    Eigen::VectorXd w = r.cwiseMax(0.0).array() + delta;
    Eigen::VectorXd z = w - r;  // keeps w - z = y - X beta

    const Eigen::VectorXd b = (1.0 - tau) * X.transpose() * Eigen::VectorXd::Ones(n);
    const double scale = 1.0 + y.cwiseAbs().maxCoeff();

    bool converged = false;
    double prev_gap = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < 200; ++iter) {
        const double gap = z.dot(a) + w.dot(s);
        if (gap < 1e-11 * n * scale) {
            converged = true;
            break;
        }
        // Rounding can stall the gap slightly above the target; the duality
        // gap bounds the objective suboptimality, so a stalled iterate this
        // close to optimal is safe to accept.
        if (gap < 1e-8 * n * scale && gap > 0.99 * prev_gap) {
            converged = true;
            break;
        }
        prev_gap = gap;

        const Eigen::VectorXd dvec =
            (z.array() / a.array() + w.array() / s.array()).inverse().matrix();
        const Eigen::VectorXd rb = b - X.transpose() * a;
        const Eigen::MatrixXd xdx =
            X.transpose() * dvec.asDiagonal() * X;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(xdx);

        auto solve_direction = [&](double mu, const Eigen::VectorXd& cz,
                                   const Eigen::VectorXd& cw, Eigen::VectorXd& dbeta,
                                   Eigen::VectorXd& da, Eigen::VectorXd& dz,
                                   Eigen::VectorXd& dw) {
            const Eigen::VectorXd rhs_vec = mu * (a.array().inverse() - s.array().inverse()).matrix() +
                                            r + cz - cw;
            dbeta = ldlt.solve(X.transpose() * (dvec.asDiagonal() * rhs_vec) - rb);
            da = dvec.asDiagonal() * (rhs_vec - X * dbeta);
            dz = (mu * a.array().inverse() - z.array() -
                  (z.array() / a.array()) * da.array() + cz.array())
                     .matrix();
            dw = (mu * s.array().inverse() - w.array() +
                  (w.array() / s.array()) * da.array() + cw.array())
                     .matrix();
        };

        const Eigen::VectorXd zero = Eigen::VectorXd::Zero(n);
        Eigen::VectorXd dbeta, da, dz, dw;
        solve_direction(0.0, zero, zero, dbeta, da, dz, dw);

        auto step_primal = [&](const Eigen::VectorXd& dav) {
            double alpha = 1.0;
            for (int i = 0; i < n; ++i) {
                if (dav(i) < 0.0) alpha = std::min(alpha, -a(i) / dav(i));
                if (dav(i) > 0.0) alpha = std::min(alpha, s(i) / dav(i));
            }
            return alpha;
        };
        auto step_dual = [&](const Eigen::VectorXd& dzv, const Eigen::VectorXd& dwv) {
            double alpha = 1.0;
            for (int i = 0; i < n; ++i) {
                if (dzv(i) < 0.0) alpha = std::min(alpha, -z(i) / dzv(i));
                if (dwv(i) < 0.0) alpha = std::min(alpha, -w(i) / dwv(i));
            }
            return alpha;
        };

        const double ap_aff = step_primal(da);
        const double ad_aff = step_dual(dz, dw);
        double gap_aff = 0.0;
        for (int i = 0; i < n; ++i) {
            gap_aff += (z(i) + ad_aff * dz(i)) * (a(i) + ap_aff * da(i));
            gap_aff += (w(i) + ad_aff * dw(i)) * (s(i) - ap_aff * da(i));
        }
        const double sigma = std::pow(std::max(gap_aff, 0.0) / gap, 3.0);
        const double mu = sigma * gap / (2.0 * n);

        // Corrector with the affine cross terms.
        const Eigen::VectorXd cz =
            (-(da.array() * dz.array()) / a.array()).matrix();
        const Eigen::VectorXd cw = ((da.array() * dw.array()) / s.array()).matrix();
        solve_direction(mu, cz, cw, dbeta, da, dz, dw);

        const double ap = std::min(0.9995 * step_primal(da), 1.0);
        const double ad = std::min(0.9995 * step_dual(dz, dw), 1.0);
        a += ap * da;
        s -= ap * da;
        beta += ad * dbeta;
        z += ad * dz;
        w += ad * dw;
        r = y - X * beta;
        if (!beta.allFinite()) throw NumericError("qr_fit: interior point diverged");
    }

    if (!converged) {
        // Degenerate problems can leave the iterate cycling near the optimum.
        // The LP solution interpolates exactly p observations, which at a
        // near-optimal iterate must be among the smallest residuals, so
        // enumerate bases drawn from the p+3 smallest and keep the best.
        auto objective = [&](const Eigen::VectorXd& coef) {
            double obj = 0.0;
            for (int i = 0; i < n; ++i) obj += pinball_loss(y(i) - X.row(i).dot(coef), tau);
            return obj;
        };
        const double stalled_obj = objective(beta);
        std::vector<int> order(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
        std::sort(order.begin(), order.end(),
                  [&](int i, int j) { return std::fabs(r(i)) < std::fabs(r(j)); });
        const int m = std::min(n, p + 3);
        std::vector<int> comb(static_cast<std::size_t>(p));
        for (int i = 0; i < p; ++i) comb[static_cast<std::size_t>(i)] = i;
        double best_obj = stalled_obj;
        Eigen::VectorXd best = beta;
        while (true) {
            Eigen::MatrixXd A(p, p);
            Eigen::VectorXd rhs(p);
            for (int i = 0; i < p; ++i) {
                A.row(i) = X.row(order[static_cast<std::size_t>(comb[static_cast<std::size_t>(i)])]);
                rhs(i) = y(order[static_cast<std::size_t>(comb[static_cast<std::size_t>(i)])]);
            }
            const Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
            if (lu.isInvertible()) {
                const Eigen::VectorXd cand = lu.solve(rhs);
                const double obj = objective(cand);
                if (obj < best_obj) {
                    best_obj = obj;
                    best = cand;
                }
            }
            int k = p - 1;
            while (k >= 0 && comb[static_cast<std::size_t>(k)] == m - p + k) --k;
            if (k < 0) break;
            ++comb[static_cast<std::size_t>(k)];
            for (int j = k + 1; j < p; ++j)
                comb[static_cast<std::size_t>(j)] = comb[static_cast<std::size_t>(j - 1)] + 1;
        }
        if (best_obj < stalled_obj) {
            beta = best;
            r = y - X * beta;
            converged = true;
        }
    }
    if (!converged) throw NumericError("qr_fit: interior point failed to converge");

    QuantileFit fit;
    fit.tau = tau;
    fit.coefficients = beta;
    fit.n = n;
    fit.p = p;
    fit.pinball_sum = 0.0;
    for (int i = 0; i < n; ++i) fit.pinball_sum += pinball_loss(r(i), tau);
    return fit;
}

std::vector<double> default_tau_grid() {
    std::vector<double> grid;
    for (int i = 1; i <= 19; ++i) grid.push_back(0.05 * i);
    return grid;
}

namespace {

double crps_weight(double tau, CrpsWeight w) {
    switch (w) {
        case CrpsWeight::Uniform: return 1.0;
        case CrpsWeight::Centre: return tau * (1.0 - tau);
        case CrpsWeight::Left: return (1.0 - tau) * (1.0 - tau);
    }
    return 1.0;
}

void check_grid(const std::vector<double>& grid) {
    if (grid.empty()) throw ConfigError("qwcrps: empty tau grid");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!(grid[i] > 0.0 && grid[i] < 1.0))
            throw ConfigError("qwcrps: tau grid entries must lie in (0,1)");
        if (i > 0 && !(grid[i] > grid[i - 1])) throw ConfigError("qwcrps: unsorted tau grid");
    }
}

}  // namespace

double qwcrps(const DensityForecast& forecast, double y, CrpsWeight weight) {
    check_grid(forecast.tau_grid);
    if (forecast.quantiles.size() != forecast.tau_grid.size())
        throw ConfigError("qwcrps: grid/quantile size mismatch");
    const double dtau =
        forecast.tau_grid.size() > 1 ? forecast.tau_grid[1] - forecast.tau_grid[0] : 1.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < forecast.tau_grid.size(); ++i) {
        const double tau = forecast.tau_grid[i];
        acc += crps_weight(tau, weight) * quantile_score(y, forecast.quantiles[i], tau) * dtau;
    }
    return acc;
}

std::pair<double, double> quantile_ic(const std::vector<QuantileFit>& fits) {
    if (fits.empty()) throw ConfigError("quantile_ic: no fits");
    const int n = fits.front().n;
    const int p = fits.front().p;
    double aic = 0.0, bic = 0.0;
    for (const auto& fit : fits) {
        if (fit.n != n || fit.p != p) throw ConfigError("quantile_ic: fits must share n and p");
        const double mean_loss = fit.pinball_sum / fit.n;
        if (!(mean_loss > 0.0))
            throw NumericError("quantile_ic: zero pinball loss (exact interpolation)");
        aic += 2.0 * n * std::log(mean_loss) + 2.0 * p;
        bic += 2.0 * n * std::log(mean_loss) + p * std::log(static_cast<double>(n));
    }
    return {aic / fits.size(), bic / fits.size()};
}

double pit(const DensityForecast& forecast, double y) {
    check_grid(forecast.tau_grid);
    const auto& taus = forecast.tau_grid;
    std::vector<double> q = forecast.quantiles;
    std::sort(q.begin(), q.end());  // monotone rearrangement
    const std::size_t k = q.size();

    auto segment_slope = [&](std::size_t lo, std::size_t hi) {
        // d tau / d q over the first non-degenerate stretch from lo/hi.
        for (std::size_t i = lo; i < hi; ++i)
            if (q[i + 1] > q[i]) return (taus[i + 1] - taus[i]) / (q[i + 1] - q[i]);
        return 0.0;
    };

    double value;
    if (y <= q.front()) {
        const double slope = k > 1 ? segment_slope(0, k - 1) : 0.0;
        value = taus.front() - (q.front() - y) * slope;
    } else if (y >= q.back()) {
        double slope = 0.0;
        for (std::size_t i = k; i-- > 1;)
            if (q[i] > q[i - 1]) {
                slope = (taus[i] - taus[i - 1]) / (q[i] - q[i - 1]);
                break;
            }
        value = taus.back() + (y - q.back()) * slope;
    } else {
        value = taus.front();
        for (std::size_t i = 0; i + 1 < k; ++i) {
            if (y <= q[i + 1]) {
                if (q[i + 1] > q[i])
                    value = taus[i] + (taus[i + 1] - taus[i]) * (y - q[i]) / (q[i + 1] - q[i]);
                else
                    value = 0.5 * (taus[i] + taus[i + 1]);
                break;
            }
        }
    }
    return std::clamp(value, 0.0, 1.0);
}

QuantileBacktestReport backtest(const std::vector<double>& gdp_growth,
                                const Eigen::MatrixXd& risk, int horizon,
                                const BacktestConfig& cfg) {
    const int T = static_cast<int>(gdp_growth.size());
    const int h = horizon;
    if (risk.rows() != 0 && risk.rows() != T)
        throw DataError("backtest: risk regressors not aligned with GDP series");
    const int k_risk = risk.rows() == 0 ? 0 : static_cast<int>(risk.cols());
    const int p = 2 + k_risk;  // constant, GDP lag, risk block
    const int n_pairs = T - h - 1;  // predictor times t = 1 .. T-1-h (lag needs t >= 1)
    if (n_pairs < 4 * p) throw DataError("backtest: series too short for horizon");

    // Design row for predictor time t: [1, y_t (which already lags the
    // response y_{t+h}), risk_t].
    auto design_row = [&](int t, Eigen::RowVectorXd& row) {
        row(0) = 1.0;
        row(1) = gdp_growth[static_cast<std::size_t>(t)];
        for (int j = 0; j < k_risk; ++j) row(2 + j) = risk(t, j);
    };

    QuantileBacktestReport report;
    report.horizon = h;

    // In-sample information criteria on the full sample.
    {
        Eigen::MatrixXd X(n_pairs, p);
        Eigen::VectorXd yv(n_pairs);
        Eigen::RowVectorXd row(p);
        for (int t = 1; t <= T - 1 - h; ++t) {
            design_row(t, row);
            X.row(t - 1) = row;
            yv(t - 1) = gdp_growth[static_cast<std::size_t>(t + h)];
        }
        std::vector<QuantileFit> fits;
        for (double tau : cfg.tau_grid) fits.push_back(qr_fit(yv, X, tau));
        std::tie(report.aic, report.bic) = quantile_ic(fits);
    }

    // Out-of-sample expanding window.
    const int first_origin =
        std::max(static_cast<int>(std::ceil(cfg.initial_window_fraction * n_pairs)) + h, 3 * p + h);
    double su = 0.0, sc = 0.0, sl = 0.0;
    for (int origin = first_origin; origin <= T - 1 - h; ++origin) {
        // Training pairs: predictor t, response t+h, with t+h <= origin.
        const int n_train = origin - h;  // t = 1 .. origin-h
        if (n_train < 3 * p) {
            ++report.origins_skipped;
            continue;
        }
        Eigen::MatrixXd X(n_train, p);
        Eigen::VectorXd yv(n_train);
        Eigen::RowVectorXd row(p);
        for (int t = 1; t <= origin - h; ++t) {
            design_row(t, row);
            X.row(t - 1) = row;
            yv(t - 1) = gdp_growth[static_cast<std::size_t>(t + h)];
        }
        Eigen::RowVectorXd x_now(p);
        design_row(origin, x_now);

        DensityForecast fc;
        fc.tau_grid = cfg.tau_grid;
        for (double tau : cfg.tau_grid) {
            const QuantileFit fit = qr_fit(yv, X, tau);
            fc.quantiles.push_back(x_now.dot(fit.coefficients));
        }
        std::sort(fc.quantiles.begin(), fc.quantiles.end());

        const double realized = gdp_growth[static_cast<std::size_t>(origin + h)];
        su += qwcrps(fc, realized, CrpsWeight::Uniform);
        sc += qwcrps(fc, realized, CrpsWeight::Centre);
        sl += qwcrps(fc, realized, CrpsWeight::Left);
        report.pits.push_back(pit(fc, realized));
        ++report.origins_used;
    }
    if (report.origins_used == 0) throw DataError("backtest: no usable forecast origins");
    report.qwcrps_uniform = su / report.origins_used;
    report.qwcrps_centre = sc / report.origins_used;
    report.qwcrps_left = sl / report.origins_used;
    report.ks_pass =
        ks_statistic_uniform(report.pits) <= ks_critical_5pct(report.pits.size());
    return report;
}

}  // namespace fsi
