#include "fsi/statespace.hpp"

#include <cmath>
#include <string>

#include "fsi/errors.hpp"
#include "fsi/nsfactor.hpp"
#include "fsi/transforms.hpp"

namespace fsi {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Innovation covariance selector: embeds Q into the top-left r x r block.
Eigen::MatrixXd embed_q(const Eigen::MatrixXd& q, int n) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
    out.topLeftCorner(q.rows(), q.cols()) = q;
    return out;
}

Eigen::VectorXd embed_intercept(const Eigen::VectorXd& d, int n) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    out.head(d.size()) = d;
    return out;
}

}  // namespace

StateSpaceModel StateSpaceModel::from_var(const Eigen::MatrixXd& loadings,
                                          const Eigen::MatrixXd& phi, const Eigen::MatrixXd& q,
                                          const Eigen::VectorXd& sigma_eps,
                                          const Eigen::VectorXd& intercept, double diffuse_var) {
    StateSpaceModel model;
    model.r = static_cast<int>(phi.rows());
    model.p = static_cast<int>(phi.cols()) / model.r;
    const int n = model.state_dim();
    model.transition = Eigen::MatrixXd::Zero(n, n);
    model.transition.topRows(model.r) = phi;
    if (model.p > 1)
        model.transition.bottomLeftCorner(n - model.r, n - model.r)
            .setIdentity();
    model.Q = q;
    model.measurement = Eigen::MatrixXd::Zero(loadings.rows(), n);
    model.measurement.leftCols(model.r) = loadings;
    model.sigma_eps = sigma_eps;
    model.intercept = intercept;
    model.init_mean = Eigen::VectorXd::Zero(n);
    model.init_cov = diffuse_var * Eigen::MatrixXd::Identity(n, n);
    model.validate();
    return model;
}

void StateSpaceModel::validate() const {
    const int n = state_dim();
    if (transition.rows() != n || transition.cols() != n)
        throw NumericError("state space: transition dimension mismatch");
    if (Q.rows() != r || Q.cols() != r) throw NumericError("state space: Q dimension mismatch");
    if (measurement.cols() != n) throw NumericError("state space: measurement width mismatch");
    if (sigma_eps.size() != measurement.rows())
        throw NumericError("state space: sigma_eps length mismatch");
    if ((sigma_eps.array() < 0.0).any())
        throw NumericError("state space: negative measurement variance");
    if (intercept.size() != r) throw NumericError("state space: intercept length mismatch");
}

FilterResult kalman_filter(const StateSpaceModel& model, const TimeSeriesPanel& panel,
                           const Eigen::MatrixXd* state_intercept) {
    model.validate();
    const int T = static_cast<int>(panel.rows());
    const int m = static_cast<int>(panel.cols());
    const int n = model.state_dim();
    if (m != model.obs_dim()) throw DataError("kalman_filter: panel width mismatch");

    const Eigen::MatrixXd rq = embed_q(model.Q, n);
    FilterResult res;
    res.filtered_mean.resize(T, n);
    res.predicted_mean.resize(T, n);
    res.filtered_cov.resize(T);
    res.predicted_cov.resize(T);
    res.loglik_terms.assign(T, 0.0);

    Eigen::VectorXd a = model.init_mean;
    Eigen::MatrixXd P = model.init_cov;

    for (int t = 0; t < T; ++t) {
        res.predicted_mean.row(t) = a.transpose();
        res.predicted_cov[t] = P;

        // Observed rows at t.
        std::vector<int> obs;
        for (int i = 0; i < m; ++i)
            if (!is_missing(panel.values(t, i))) obs.push_back(i);

        if (!obs.empty()) {
            const int no = static_cast<int>(obs.size());
            Eigen::MatrixXd H(no, n);
            Eigen::VectorXd y(no), rdiag(no);
            for (int i = 0; i < no; ++i) {
                H.row(i) = model.measurement.row(obs[i]);
                y(i) = panel.values(t, obs[i]);
                rdiag(i) = model.sigma_eps(obs[i]);
            }
            const Eigen::VectorXd v = y - H * a;
            Eigen::MatrixXd S = H * P * H.transpose();
            S.diagonal() += rdiag;
            Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
            if (ldlt.info() != Eigen::Success || !S.allFinite())
                throw NumericError("kalman_filter: non-finite innovation covariance at t=" +
                                   std::to_string(t));
            const Eigen::MatrixXd PHt = P * H.transpose();
            const Eigen::MatrixXd K = ldlt.solve(PHt.transpose()).transpose();
            a += K * v;
            const Eigen::MatrixXd IKH = Eigen::MatrixXd::Identity(n, n) - K * H;
            P = IKH * P * IKH.transpose() + K * rdiag.asDiagonal() * K.transpose();
            P = 0.5 * (P + P.transpose());

            double logdet = 0.0;
            for (int i = 0; i < no; ++i) {
                const double di = ldlt.vectorD()(i);
                if (!(di > 0.0))
                    throw NumericError("kalman_filter: innovation covariance not PD at t=" +
                                       std::to_string(t));
                logdet += std::log(di);
            }
            const double quad = v.dot(ldlt.solve(v));
            res.loglik_terms[t] = -0.5 * (no * std::log(kTwoPi) + logdet + quad);
        }

        res.filtered_mean.row(t) = a.transpose();
        res.filtered_cov[t] = P;

        // Predict t+1.
        Eigen::VectorXd c = state_intercept && state_intercept->size() > 0 &&
                                    t + 1 < static_cast<int>(state_intercept->rows())
                                ? embed_intercept(state_intercept->row(t + 1).transpose(), n)
                                : embed_intercept(model.intercept, n);
        a = c + model.transition * a;
        P = model.transition * P * model.transition.transpose() + rq;
        P = 0.5 * (P + P.transpose());
    }
    for (double term : res.loglik_terms) res.loglik += term;
    return res;
}

SmootherResult kalman_smoother(const StateSpaceModel& model, const TimeSeriesPanel& panel,
                               const FilterResult& filter, const Eigen::MatrixXd*) {
    const int T = static_cast<int>(panel.rows());
    const int n = model.state_dim();
    SmootherResult res;
    res.mean.resize(T, n);
    res.cov.resize(T);
    res.lag_cov.resize(T);

    res.mean.row(T - 1) = filter.filtered_mean.row(T - 1);
    res.cov[T - 1] = filter.filtered_cov[T - 1];

    std::vector<Eigen::MatrixXd> gains(T);
    for (int t = T - 2; t >= 0; --t) {
        const Eigen::MatrixXd& Pf = filter.filtered_cov[t];
        const Eigen::MatrixXd& Pp = filter.predicted_cov[t + 1];
        // J_t = Pf Phi' Pp^{-1}, via a solve against the (symmetric) Pp.
        Eigen::LDLT<Eigen::MatrixXd> ldlt(Pp);
        const Eigen::MatrixXd J = ldlt.solve(model.transition * Pf).transpose();
        gains[t] = J;
        res.mean.row(t) =
            filter.filtered_mean.row(t) +
            (J * (res.mean.row(t + 1) - filter.predicted_mean.row(t + 1)).transpose()).transpose();
        res.cov[t] = Pf + J * (res.cov[t + 1] - Pp) * J.transpose();
        res.cov[t] = 0.5 * (res.cov[t] + res.cov[t].transpose());
    }
    // Cov(alpha_t, alpha_{t-1} | Y) = P_t^s J_{t-1}'.
    for (int t = 1; t < T; ++t) res.lag_cov[t] = res.cov[t] * gains[t - 1].transpose();
    (void)n;
    return res;
}

namespace {

// Mean-fill missing cells (panel is standardized, so zero-mean fill).
TimeSeriesPanel fill_missing(const TimeSeriesPanel& panel) {
    TimeSeriesPanel out = panel;
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
        double sum = 0.0;
        int c = 0;
        for (Eigen::Index t = 0; t < out.rows(); ++t)
            if (!is_missing(out.values(t, j))) sum += out.values(t, j), ++c;
        const double mean = c > 0 ? sum / c : 0.0;
        for (Eigen::Index t = 0; t < out.rows(); ++t)
            if (is_missing(out.values(t, j))) out.values(t, j) = mean;
    }
    return out;
}

struct VarFit {
    Eigen::MatrixXd phi;  // r x (r p)
    Eigen::VectorXd d;
    Eigen::MatrixXd q;
};

VarFit fit_var_ols(const Eigen::MatrixXd& f, int p) {
    const int T = static_cast<int>(f.rows());
    const int r = static_cast<int>(f.cols());
    const int n = T - p;
    Eigen::MatrixXd Z(n, r * p + 1);
    Eigen::MatrixXd Y(n, r);
    for (int t = p; t < T; ++t) {
        Z(t - p, 0) = 1.0;
        for (int l = 1; l <= p; ++l) Z.block(t - p, 1 + (l - 1) * r, 1, r) = f.row(t - l);
        Y.row(t - p) = f.row(t);
    }
    const Eigen::MatrixXd beta =
        (Z.transpose() * Z + 1e-10 * Eigen::MatrixXd::Identity(r * p + 1, r * p + 1))
            .ldlt()
            .solve(Z.transpose() * Y);
    VarFit fit;
    fit.d = beta.row(0).transpose();
    fit.phi = beta.bottomRows(r * p).transpose();
    const Eigen::MatrixXd resid = Y - Z * beta;
    fit.q = resid.transpose() * resid / std::max(n - r * p - 1, 1);
    fit.q = 0.5 * (fit.q + fit.q.transpose());
    return fit;
}

// Orthonormalize loadings by QR, absorb the rotation into the VAR blocks and
// the factor paths. The fitted common component L f is unchanged.
void reorthonormalize(Eigen::MatrixXd& L, Eigen::MatrixXd& phi, Eigen::VectorXd& d,
                      Eigen::MatrixXd& q, Eigen::MatrixXd* factors) {
    const int r = static_cast<int>(L.cols());
    const int p = static_cast<int>(phi.cols()) / r;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(L);
    Eigen::MatrixXd Qthin =
        qr.householderQ() * Eigen::MatrixXd::Identity(L.rows(), r);
    Eigen::MatrixXd R = Qthin.transpose() * L;
    // Sign rule on the orthonormal columns, folded into R.
    for (int j = 0; j < r; ++j) {
        Eigen::Index imax = 0;
        Qthin.col(j).cwiseAbs().maxCoeff(&imax);
        if (Qthin(imax, j) < 0.0) {
            Qthin.col(j) = -Qthin.col(j);
            R.row(j) = -R.row(j);
        }
    }
    const Eigen::MatrixXd Rinv = R.inverse();
    L = Qthin;
    d = R * d;
    q = R * q * R.transpose();
    q = 0.5 * (q + q.transpose());
    Eigen::MatrixXd phi_new(r, r * p);
    for (int l = 0; l < p; ++l)
        phi_new.middleCols(l * r, r) = R * phi.middleCols(l * r, r) * Rinv;
    phi = phi_new;
    if (factors) *factors = *factors * R.transpose();
}

}  // namespace

EstimatedFactorModel em_estimate(const TimeSeriesPanel& panel, int r, int p,
                                 const EmOptions& opts) {
    const int T = static_cast<int>(panel.rows());
    const int m = static_cast<int>(panel.cols());
    if (r < 1 || r >= m) throw ConfigError("em_estimate: need 1 <= r < m");
    if (p < 1) throw ConfigError("em_estimate: p must be >= 1");

    // Initialization from the generalized-covariance eigenvectors.
    const TimeSeriesPanel filled = fill_missing(panel);
    InitialFactorEstimate init = initial_loadings(filled, r);
    Eigen::MatrixXd L = init.loadings;
    Eigen::MatrixXd f = init.factors;
    VarFit var = fit_var_ols(f, p);
    Eigen::VectorXd sigma(m);
    {
        const Eigen::MatrixXd resid = filled.values - f * L.transpose();
        for (int i = 0; i < m; ++i)
            sigma(i) = std::max(resid.col(i).squaredNorm() / T, opts.sigma_floor);
    }

    EstimatedFactorModel out;
    double prev_ll = -std::numeric_limits<double>::infinity();
    const int n = r * p;

    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        StateSpaceModel model =
            StateSpaceModel::from_var(L, var.phi, var.q, sigma, var.d, opts.diffuse_var);
        const FilterResult filt = kalman_filter(model, panel);
        const SmootherResult smooth = kalman_smoother(model, panel, filt);
        const double ll = filt.loglik;
        if (!out.loglik_trace.empty() && ll < prev_ll - 1e-8 * (1.0 + std::fabs(prev_ll)))
            throw NumericError("em_estimate: log-likelihood decreased at iteration " +
                               std::to_string(iter));
        out.loglik_trace.push_back(ll);
        const bool converged =
            iter > 0 && std::fabs(ll - prev_ll) < opts.rel_tolerance * (1.0 + std::fabs(prev_ll));
        prev_ll = ll;

        // Smoothed moments of the contemporaneous factor block.
        // Ef[t] (r), Eff[t] = E[f_t f_t'], and cross moments for the VAR step.
        std::vector<Eigen::MatrixXd> Eff(T);
        for (int t = 0; t < T; ++t)
            Eff[t] = smooth.cov[t].topLeftCorner(r, r) +
                     smooth.mean.row(t).head(r).transpose() * smooth.mean.row(t).head(r);

        if (converged || iter == opts.max_iterations - 1) {
            out.model = model;
            out.factors = smooth.mean.leftCols(r);
            out.converged = converged;
            break;
        }

        // M-step, measurement: per-series regression over observed cells.
        for (int i = 0; i < m; ++i) {
            Eigen::MatrixXd sff = Eigen::MatrixXd::Zero(r, r);
            Eigen::VectorXd sxf = Eigen::VectorXd::Zero(r);
            double sxx = 0.0;
            int cnt = 0;
            for (int t = 0; t < T; ++t) {
                const double x = panel.values(t, i);
                if (is_missing(x)) continue;
                sff += Eff[t];
                sxf += x * smooth.mean.row(t).head(r).transpose();
                sxx += x * x;
                ++cnt;
            }
            if (cnt == 0) continue;
            const Eigen::VectorXd li =
                (sff + 1e-12 * Eigen::MatrixXd::Identity(r, r)).ldlt().solve(sxf);
            L.row(i) = li.transpose();
            const double s2 = (sxx - 2.0 * li.dot(sxf) + li.dot(sff * li)) / cnt;
            sigma(i) = std::max(s2, opts.sigma_floor);
        }

        // M-step, transition: VAR(p) with intercept on smoothed moments.
        {
            const int q_dim = n + 1;  // (1, alpha_{t-1})
            Eigen::MatrixXd szz = Eigen::MatrixXd::Zero(q_dim, q_dim);
            Eigen::MatrixXd sfz = Eigen::MatrixXd::Zero(r, q_dim);
            Eigen::MatrixXd sff2 = Eigen::MatrixXd::Zero(r, r);
            for (int t = 1; t < T; ++t) {
                const Eigen::VectorXd a_prev = smooth.mean.row(t - 1).transpose();
                const Eigen::MatrixXd Eaa =
                    smooth.cov[t - 1] + a_prev * a_prev.transpose();
                const Eigen::VectorXd f_t = smooth.mean.row(t).head(r).transpose();
                const Eigen::MatrixXd Efa =
                    smooth.lag_cov[t].topRows(r) + f_t * a_prev.transpose();
                szz(0, 0) += 1.0;
                szz.block(0, 1, 1, n) += a_prev.transpose();
                szz.block(1, 0, n, 1) += a_prev;
                szz.block(1, 1, n, n) += Eaa;
                sfz.col(0) += f_t;
                sfz.rightCols(n) += Efa;
                sff2 += Eff[t];
            }
            const Eigen::MatrixXd beta =
                szz.ldlt().solve(sfz.transpose()).transpose();  // r x (n+1)
            var.d = beta.col(0);
            var.phi = beta.rightCols(n);
            Eigen::MatrixXd qn = (sff2 - beta * sfz.transpose()) / (T - 1);
            var.q = 0.5 * (qn + qn.transpose());
            // Guard the innovation covariance away from singularity.
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(var.q);
            if (es.eigenvalues().minCoeff() < 1e-10)
                var.q += (1e-10 - std::min(es.eigenvalues().minCoeff(), 0.0)) *
                         Eigen::MatrixXd::Identity(r, r);
        }

        reorthonormalize(L, var.phi, var.d, var.q, nullptr);
    }

    // Diagnostics on the smoothed factor paths.
    for (int j = 0; j < r; ++j) {
        std::vector<double> path(out.factors.col(j).data(), out.factors.col(j).data() + T);
        const AdfResult adf = adf_test(path);
        out.stationary.push_back(adf.p_value < 0.05);
    }
    const auto ev = explained_variance(out.model.measurement.leftCols(r), out.factors, panel);
    for (const auto& row : ev) out.explained_share.push_back(row.share);
    return out;
}

std::vector<ExplainedVarianceRow> explained_variance(const Eigen::MatrixXd& loadings,
                                                     const Eigen::MatrixXd& factors,
                                                     const TimeSeriesPanel& panel) {
    const int r = static_cast<int>(factors.cols());
    double total = 0.0;
    for (Eigen::Index j = 0; j < panel.cols(); ++j) {
        double sum = 0.0, sumsq = 0.0;
        int cnt = 0;
        for (Eigen::Index t = 0; t < panel.rows(); ++t) {
            const double v = panel.values(t, j);
            if (is_missing(v)) continue;
            sum += v;
            sumsq += v * v;
            ++cnt;
        }
        if (cnt > 1) total += (sumsq - sum * sum / cnt) / (cnt - 1);
    }
    if (!(total > 0.0)) throw NumericError("explained_variance: degenerate panel");

    std::vector<double> shares(r);
    for (int j = 0; j < r; ++j) {
        const Eigen::VectorXd fj = factors.col(j);
        const double mean = fj.mean();
        const double var_f = (fj.array() - mean).square().sum() / (fj.size() - 1);
        shares[static_cast<std::size_t>(j)] = loadings.col(j).squaredNorm() * var_f / total;
    }
    std::sort(shares.begin(), shares.end(), std::greater<>());
    std::vector<ExplainedVarianceRow> out;
    double cum = 0.0;
    for (int j = 0; j < r; ++j) {
        cum += shares[static_cast<std::size_t>(j)];
        out.push_back({j + 1, shares[static_cast<std::size_t>(j)], cum});
    }
    return out;
}

namespace {

Eigen::VectorXd draw_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, Rng& rng) {
    Eigen::VectorXd z(mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
    Eigen::LLT<Eigen::MatrixXd> llt(cov + 1e-14 * Eigen::MatrixXd::Identity(cov.rows(), cov.cols()));
    if (llt.info() == Eigen::Success) return mean + llt.matrixL() * z;
    // Singular (conditionally pinned) covariances: eigenvalue square root with
    // negative round-off clipped at zero.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw NumericError("draw_mvn: covariance decomposition failed");
    const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return mean + es.eigenvectors() * root.asDiagonal() * z;
}

// Inverse-Wishart(nu, S) via Bartlett decomposition of the Wishart(nu, S^{-1}).
Eigen::MatrixXd draw_inverse_wishart(double nu, const Eigen::MatrixXd& scale, Rng& rng,
                                     int* rejections) {
    const int d = static_cast<int>(scale.rows());
    for (int attempt = 0; attempt < 100; ++attempt) {
        Eigen::LLT<Eigen::MatrixXd> llt(scale.inverse());
        if (llt.info() != Eigen::Success) {
            ++(*rejections);
            continue;
        }
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d);
        for (int i = 0; i < d; ++i) {
            A(i, i) = std::sqrt(rng.chi2(nu - i));
            for (int j = 0; j < i; ++j) A(i, j) = rng.normal();
        }
        const Eigen::MatrixXd Lw = llt.matrixL() * A;
        const Eigen::MatrixXd W = Lw * Lw.transpose();
        Eigen::LLT<Eigen::MatrixXd> check(W);
        if (check.info() != Eigen::Success) {
            ++(*rejections);
            continue;
        }
        Eigen::MatrixXd iw = W.inverse();
        return 0.5 * (iw + iw.transpose());
    }
    throw NumericError("draw_inverse_wishart: persistent non-PD draws");
}

}  // namespace

Eigen::MatrixXd ffbs_draw_states(const StateSpaceModel& model, const FilterResult& filt, Rng& rng,
                                 const Eigen::MatrixXd* state_intercept) {
    const int T = static_cast<int>(filt.filtered_mean.rows());
    const int r = model.r;
    const Eigen::MatrixXd phi_top = model.transition.topRows(r);

    const int n = model.state_dim();
    const int p = model.p;

    Eigen::MatrixXd path(T, r);
    Eigen::VectorXd alpha =
        draw_mvn(filt.filtered_mean.row(T - 1).transpose(), filt.filtered_cov[T - 1], rng);
    path.row(T - 1) = alpha.head(r).transpose();
    for (int t = T - 2; t >= 0; --t) {
        // Condition on the full drawn state at t+1. Its first block is
        // stochastic, f_{t+1} = c_{t+1} + Phi_top alpha_t + u with u ~ N(0,Q);
        // its identity blocks pin the leading (p-1) r entries of alpha_t to
        // the trailing blocks of alpha_{t+1} exactly (zero noise).
        const Eigen::VectorXd c =
            state_intercept && state_intercept->size() > 0
                ? state_intercept->row(t + 1).transpose()
                : model.intercept;
        const int nc = r + (p - 1) * r;  // = n
        Eigen::MatrixXd C = Eigen::MatrixXd::Zero(nc, n);
        C.topRows(r) = phi_top;
        C.block(r, 0, (p - 1) * r, (p - 1) * r) =
            Eigen::MatrixXd::Identity((p - 1) * r, (p - 1) * r);
        Eigen::VectorXd w(nc), cext = Eigen::VectorXd::Zero(nc);
        w.head(r) = alpha.head(r);
        w.tail((p - 1) * r) = alpha.tail((p - 1) * r);
        cext.head(r) = c;

        const Eigen::VectorXd af = filt.filtered_mean.row(t).transpose();
        const Eigen::MatrixXd& Pf = filt.filtered_cov[t];
        Eigen::MatrixXd S = C * Pf * C.transpose();
        S.topLeftCorner(r, r) += model.Q;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(S + 1e-12 * Eigen::MatrixXd::Identity(nc, nc));
        const Eigen::MatrixXd gain = ldlt.solve(C * Pf).transpose();
        const Eigen::VectorXd mean = af + gain * (w - cext - C * af);
        Eigen::MatrixXd cov = Pf - gain * C * Pf;
        cov = 0.5 * (cov + cov.transpose());
        Eigen::VectorXd draw = draw_mvn(mean, cov, rng);
        // Enforce the pinned overlap exactly.
        draw.head((p - 1) * r) = alpha.tail((p - 1) * r);
        path.row(t) = draw.head(r).transpose();
        alpha = draw;
    }
    return path;
}

FfbsDraws ffbs_sample(const TimeSeriesPanel& panel, int r, int p, const FfbsOptions& opts) {
    if (opts.n_draws < 1) throw ConfigError("ffbs_sample: n_draws must be >= 1");
    const int T = static_cast<int>(panel.rows());
    const int m = static_cast<int>(panel.cols());
    Rng rng(opts.seed);

    // Start from the EM initialization path.
    const TimeSeriesPanel filled = fill_missing(panel);
    InitialFactorEstimate init = initial_loadings(filled, r);
    Eigen::MatrixXd L = init.loadings;
    Eigen::MatrixXd f = init.factors;
    VarFit var = fit_var_ols(f, p);
    Eigen::VectorXd sigma(m);
    {
        const Eigen::MatrixXd resid = filled.values - f * L.transpose();
        for (int i = 0; i < m; ++i)
            sigma(i) = std::max(resid.col(i).squaredNorm() / T, 1e-10);
    }
    const Eigen::MatrixXd L_fixed = L;
    const Eigen::VectorXd sigma_fixed = sigma;

    FfbsDraws out;
    out.factor_mean = Eigen::MatrixXd::Zero(T, r);
    Eigen::MatrixXd factor_m2 = Eigen::MatrixXd::Zero(T, r);
    int kept = 0;

    const int total = opts.burn_in + opts.n_draws;
    for (int sweep = 0; sweep < total; ++sweep) {
        // 1. Factor path by forward filter, backward sample on the first block.
        StateSpaceModel model = StateSpaceModel::from_var(L, var.phi, var.q, sigma, var.d);
        const FilterResult filt = kalman_filter(model, panel);
        const Eigen::MatrixXd path = ffbs_draw_states(model, filt, rng);

        // 2. VAR coefficients and Q given the factor path.
        {
            const int q_dim = r * p + 1;
            const int nobs = T - p;
            Eigen::MatrixXd Z(nobs, q_dim);
            Eigen::MatrixXd Y(nobs, r);
            for (int t = p; t < T; ++t) {
                Z(t - p, 0) = 1.0;
                for (int l = 1; l <= p; ++l)
                    Z.block(t - p, 1 + (l - 1) * r, 1, r) = path.row(t - l);
                Y.row(t - p) = path.row(t);
            }
            const Eigen::MatrixXd prior_prec =
                Eigen::MatrixXd::Identity(q_dim, q_dim) / opts.var_coef_prior_var;
            const Eigen::MatrixXd V = (Z.transpose() * Z + prior_prec).inverse();
            const Eigen::MatrixXd Bhat = V * Z.transpose() * Y;  // q_dim x r
            const Eigen::MatrixXd resid = Y - Z * Bhat;
            const Eigen::MatrixXd scale = resid.transpose() * resid +
                                          Bhat.transpose() * prior_prec * Bhat +
                                          opts.ig_scale * Eigen::MatrixXd::Identity(r, r);
            var.q = draw_inverse_wishart(2.0 * opts.ig_shape + r + nobs, scale, rng,
                                         &out.rejected_covariance_draws);
            // vec draw of the coefficients, column by column with shared V.
            Eigen::MatrixXd B(q_dim, r);
            Eigen::LLT<Eigen::MatrixXd> lltq(var.q);
            Eigen::LLT<Eigen::MatrixXd> lltv(V + 1e-14 * Eigen::MatrixXd::Identity(q_dim, q_dim));
            Eigen::MatrixXd Zmat(q_dim, r);
            for (int i = 0; i < q_dim; ++i)
                for (int j = 0; j < r; ++j) Zmat(i, j) = rng.normal();
            B = Bhat + lltv.matrixL() * Zmat * lltq.matrixU();
            var.d = B.row(0).transpose();
            var.phi = B.bottomRows(r * p).transpose();
        }

        // 3. Measurement parameters, unless held fixed.
        if (!opts.fix_measurement) {
            for (int i = 0; i < m; ++i) {
                Eigen::MatrixXd sff = Eigen::MatrixXd::Zero(r, r);
                Eigen::VectorXd sxf = Eigen::VectorXd::Zero(r);
                double sxx = 0.0;
                int cnt = 0;
                for (int t = 0; t < T; ++t) {
                    const double x = panel.values(t, i);
                    if (is_missing(x)) continue;
                    const Eigen::VectorXd ft = path.row(t).transpose();
                    sff += ft * ft.transpose();
                    sxf += x * ft;
                    sxx += x * x;
                    ++cnt;
                }
                const Eigen::MatrixXd V =
                    (sff / sigma(i) +
                     Eigen::MatrixXd::Identity(r, r) / opts.loading_prior_var)
                        .inverse();
                const Eigen::VectorXd mean = V * sxf / sigma(i);
                const Eigen::VectorXd li = draw_mvn(mean, V, rng);
                L.row(i) = li.transpose();
                const double ssr = sxx - 2.0 * li.dot(sxf) + li.dot(sff * li);
                sigma(i) = rng.inverse_gamma(opts.ig_shape + 0.5 * cnt,
                                             opts.ig_scale + 0.5 * std::max(ssr, 0.0));
                sigma(i) = std::max(sigma(i), 1e-12);
            }
        } else {
            L = L_fixed;
            sigma = sigma_fixed;
        }

        // 4. Per-draw identification.
        Eigen::MatrixXd path_rot = path;
        if (!opts.fix_measurement) reorthonormalize(L, var.phi, var.d, var.q, &path_rot);

        if (sweep >= opts.burn_in) {
            ++kept;
            out.loadings.push_back(L);
            Eigen::MatrixXd phi_store(r, r * p + 1);
            phi_store.col(0) = var.d;
            phi_store.rightCols(r * p) = var.phi;
            out.phi.push_back(phi_store);
            out.q.push_back(var.q);
            out.sigma_eps.push_back(sigma);
            const Eigen::MatrixXd delta = path_rot - out.factor_mean;
            out.factor_mean += delta / kept;
            factor_m2 += delta.cwiseProduct(path_rot - out.factor_mean);
        }
    }

    out.factor_sd = (factor_m2 / std::max(kept - 1, 1)).cwiseSqrt();
    return out;
}

std::vector<double> combine_factors(const Eigen::MatrixXd& factors) {
    if (factors.cols() == 0) throw ConfigError("combine_factors: no factors");
    std::vector<double> out(static_cast<std::size_t>(factors.rows()));
    for (Eigen::Index t = 0; t < factors.rows(); ++t)
        out[static_cast<std::size_t>(t)] = factors.row(t).mean();
    return out;
}

Eigen::MatrixXd align_factors(const Eigen::MatrixXd& factors, const Eigen::VectorXd& reference) {
    if (reference.size() != factors.rows())
        throw DataError("align_factors: reference length mismatch");
    Eigen::MatrixXd out = factors;
    const Eigen::VectorXd ref_c = reference.array() - reference.mean();
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
        Eigen::VectorXd col = out.col(j);
        const double mean = col.mean();
        const double sd = std::sqrt((col.array() - mean).square().sum() / (col.size() - 1));
        if (!(sd > 0.0)) throw NumericError("align_factors: constant factor column");
        col = (col.array() - mean) / sd;
        const double corr = col.dot(ref_c);
        out.col(j) = corr < 0.0 ? (-col).eval() : col;
    }
    return out;
}

}  // namespace fsi
