#include "fsi/nsfactor.hpp"

#include <cmath>
#include <string>

#include "fsi/errors.hpp"

namespace fsi {

GeneralizedCovariance generalized_cov(const TimeSeriesPanel& panel, int k, int d, int drift) {
    if (panel.has_missing()) throw DataError("generalized_cov: panel has missing values");
    const int T = static_cast<int>(panel.rows());
    if (k >= T) throw DataError("generalized_cov: lag k >= T");
    if (T <= k + 2) throw DataError("generalized_cov: sample too short for lag");

    const Eigen::RowVectorXd mean = panel.values.colwise().mean();
    const Eigen::MatrixXd centered = panel.values.rowwise() - mean;

    const int m = static_cast<int>(panel.cols());
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(m, m);
    for (int t = k; t < T; ++t)
        acc.noalias() += centered.row(t - k).transpose() * centered.row(t);

    const double exponent = d == 0 && drift == 0 ? 1.0 : 2.0 * d + drift;
    GeneralizedCovariance out;
    out.k = k;
    out.d = d;
    out.drift = drift;
    out.T_used = T - k;
    out.matrix = acc / std::pow(static_cast<double>(T), exponent);
    return out;
}

Eigen::MatrixXd canonical_matrix(const TimeSeriesPanel& panel, int k) {
    if (panel.has_missing()) throw DataError("canonical_matrix: panel has missing values");
    const int T = static_cast<int>(panel.rows());
    const int m = static_cast<int>(panel.cols());
    if (k >= T) throw DataError("canonical_matrix: lag k >= T");

    Eigen::MatrixXd s00 = Eigen::MatrixXd::Zero(m, m);
    Eigen::MatrixXd skk = Eigen::MatrixXd::Zero(m, m);
    Eigen::MatrixXd s0k = Eigen::MatrixXd::Zero(m, m);
    for (int t = k; t < T; ++t) {
        const auto xt = panel.values.row(t);
        const auto xl = panel.values.row(t - k);
        s00.noalias() += xt.transpose() * xt;
        skk.noalias() += xl.transpose() * xl;
        s0k.noalias() += xt.transpose() * xl;
    }

    for (const auto* g : {&s00, &skk}) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(*g);
        const double cond =
            svd.singularValues()(0) / svd.singularValues()(svd.singularValues().size() - 1);
        if (!std::isfinite(cond) || cond > 1e12)
            throw NumericError("canonical_matrix: singular Gram matrix, condition number " +
                               std::to_string(cond));
    }

    // Symmetric similarity transform of M1(k): S00^{-1/2} S0k Skk^{-1} Sk0 S00^{-1/2}.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s00);
    if (es.info() != Eigen::Success) throw NumericError("canonical_matrix: eigen failure on S00");
    const Eigen::MatrixXd s00_inv_sqrt = es.operatorInverseSqrt();
    const Eigen::MatrixXd skk_inv = skk.llt().solve(Eigen::MatrixXd::Identity(m, m));
    Eigen::MatrixXd core = s00_inv_sqrt * s0k * skk_inv * s0k.transpose() * s00_inv_sqrt;
    return 0.5 * (core + core.transpose());
}

double factor_test_statistic(const std::vector<double>& eig_desc, int r, int T, int k) {
    const int m = static_cast<int>(eig_desc.size());
    double s = 0.0;
    for (int j = r; j < m; ++j) {
        const double lam = std::min(std::max(eig_desc[static_cast<std::size_t>(j)], 0.0),
                                    1.0 - 1e-12);
        s += std::log1p(-lam);
    }
    return -(static_cast<double>(T - k)) * s;
}

int select_r_sequential(const std::vector<double>& S_by_r, const std::vector<double>& q95_by_r) {
    if (S_by_r.size() != q95_by_r.size())
        throw NumericError("select_r_sequential: length mismatch");
    int r = 0;
    while (r < static_cast<int>(S_by_r.size()) &&
           S_by_r[static_cast<std::size_t>(r)] > q95_by_r[static_cast<std::size_t>(r)])
        ++r;
    return r;
}

std::pair<int, FactorNumberTable> factor_number_test(const TimeSeriesPanel& panel,
                                                     const std::vector<int>& lag_set, double level,
                                                     int decision_lag) {
    if (lag_set.empty()) throw ConfigError("factor_number_test: empty lag set");
    const int T = static_cast<int>(panel.rows());
    const int m = static_cast<int>(panel.cols());

    FactorNumberTable table;
    table.lags = lag_set;
    table.decision_lag = decision_lag;

    std::vector<std::vector<double>> eig_by_lag;
    for (int k : lag_set) {
        const Eigen::MatrixXd mk = canonical_matrix(panel, k);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(mk);
        if (es.info() != Eigen::Success)
            throw NumericError("factor_number_test: eigen solver failed");
        std::vector<double> lam(es.eigenvalues().data(), es.eigenvalues().data() + m);
        std::sort(lam.begin(), lam.end(), std::greater<>());
        eig_by_lag.push_back(std::move(lam));
    }

    for (int r = 0; r < m; ++r) {
        FactorNumberRow row;
        row.r = r;
        row.dof = (m - r) * (m - r);
        row.q05 = chi2_quantile(1.0 - level, row.dof);
        row.q95 = chi2_quantile(level, row.dof);
        for (std::size_t i = 0; i < lag_set.size(); ++i) {
            const double s = factor_test_statistic(eig_by_lag[i], r, T, lag_set[i]);
            row.S.push_back(s);
            row.reject.push_back(s > row.q95);
        }
        table.rows.push_back(std::move(row));
    }

    // Sequential rule at the decision lag.
    std::size_t lag_idx = 0;
    for (std::size_t i = 0; i < lag_set.size(); ++i)
        if (lag_set[i] == decision_lag) lag_idx = i;
    std::vector<double> s_col, q_col;
    for (const auto& row : table.rows) {
        s_col.push_back(row.S[lag_idx]);
        q_col.push_back(row.q95);
    }
    table.selected_r = select_r_sequential(s_col, q_col);
    return {table.selected_r, table};
}

Eigen::MatrixXd scaling_matrix(int T, const std::vector<int>& d_list, int r2) {
    if (T <= 1) throw NumericError("scaling_matrix: T must exceed 1");
    if (d_list.empty() && r2 == 0) throw ConfigError("scaling_matrix: empty specification");
    for (int d : d_list)
        if (d < 1) throw ConfigError("scaling_matrix: integration orders must be >= 1");
    const int n = static_cast<int>(d_list.size()) + r2;
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
    int i = 0;
    for (int d : d_list) out(i, i) = 1.0 / std::pow(static_cast<double>(T), d), ++i;
    for (int j = 0; j < r2; ++j) out(i, i) = 1.0 / std::sqrt(static_cast<double>(T)), ++i;
    return out;
}

void apply_sign_rule(Eigen::MatrixXd& loadings, Eigen::MatrixXd* factors) {
    for (Eigen::Index j = 0; j < loadings.cols(); ++j) {
        Eigen::Index imax = 0;
        loadings.col(j).cwiseAbs().maxCoeff(&imax);
        if (loadings(imax, j) < 0.0) {
            loadings.col(j) = -loadings.col(j);
            if (factors) factors->col(j) = -factors->col(j);
        }
    }
}

InitialFactorEstimate initial_loadings(const TimeSeriesPanel& panel, int r) {
    const int m = static_cast<int>(panel.cols());
    if (r >= m) throw ConfigError("initial_loadings: r must be < m");
    if (r < 1) throw ConfigError("initial_loadings: r must be >= 1");
    if (panel.has_missing()) throw DataError("initial_loadings: panel has missing values");

    const GeneralizedCovariance cx1 = generalized_cov(panel, 1);
    const Eigen::MatrixXd sym = 0.5 * (cx1.matrix + cx1.matrix.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw NumericError("initial_loadings: eigen solver failed");

    InitialFactorEstimate out;
    out.loadings.resize(m, r);
    out.eigenvalues.resize(r);
    for (int j = 0; j < r; ++j) {
        out.loadings.col(j) = es.eigenvectors().col(m - 1 - j);
        out.eigenvalues(j) = es.eigenvalues()(m - 1 - j);
    }
    apply_sign_rule(out.loadings);
    out.factors = panel.values * out.loadings;  // T x r projections
    return out;
}

}  // namespace fsi
