#pragma once

#include <Eigen/Dense>
#include <vector>

#include "fsi/panel.hpp"
#include "fsi/stats.hpp"

namespace fsi {

// Lag-k covariance normalized by T^(2d+D) so it stays bounded for integrated
// panels. d=0, D=0 uses the ordinary 1/T sample covariance (the stationary
// limit; the raw exponent would be zero).
struct GeneralizedCovariance {
    int k = 0;
    int d = 1;
    int drift = 0;  // D in {0,1}
    Eigen::MatrixXd matrix;
    int T_used = 0;
};

GeneralizedCovariance generalized_cov(const TimeSeriesPanel& panel, int k, int d = 1,
                                      int drift = 0);

// Symmetric reformulation of the squared canonical covariance matrix: its
// eigenvalues are the squared canonical correlations between X_t and X_{t-k}
// and lie in [0, 1].
Eigen::MatrixXd canonical_matrix(const TimeSeriesPanel& panel, int k);

struct FactorNumberRow {
    int r = 0;
    int dof = 0;
    double q05 = 0.0;
    double q95 = 0.0;
    std::vector<double> S;         // one per lag in the configured lag set
    std::vector<bool> reject;      // S > q95 per lag
};

struct FactorNumberTable {
    std::vector<int> lags;
    std::vector<FactorNumberRow> rows;  // r = 0 .. m-1
    int selected_r = 0;
    int decision_lag = 1;
};

// S statistic from the m-r smallest eigenvalues: -(T-k) * sum log(1 - lambda).
double factor_test_statistic(const std::vector<double>& eigenvalues_desc, int r, int T, int k);

// Sequential rule on precomputed S values against chi-square upper critical
// values: start at r = 0, increment while S > q95. Returns the first
// non-rejected r (or the row count if all reject).
int select_r_sequential(const std::vector<double>& S_by_r, const std::vector<double>& q95_by_r);

std::pair<int, FactorNumberTable> factor_number_test(const TimeSeriesPanel& panel,
                                                     const std::vector<int>& lag_set = {1, 2, 3, 4,
                                                                                        5},
                                                     double level = 0.95, int decision_lag = 1);

// Diagonal scaling for heterogeneous integration orders (1/T^d_i for each
// non-stationary factor, 1/sqrt(T) for each stationary one).
Eigen::MatrixXd scaling_matrix(int T, const std::vector<int>& d_list, int r2);

struct InitialFactorEstimate {
    Eigen::MatrixXd loadings;     // m x r, orthonormal columns
    Eigen::MatrixXd factors;      // T x r
    Eigen::VectorXd eigenvalues;  // length r
};

// First r eigenvectors of symmetrized C_X(1); factors are the projections of
// the panel onto them.
InitialFactorEstimate initial_loadings(const TimeSeriesPanel& panel, int r);

// Flip loading columns so the largest-magnitude entry is positive.
void apply_sign_rule(Eigen::MatrixXd& loadings, Eigen::MatrixXd* factors = nullptr);

}  // namespace fsi
