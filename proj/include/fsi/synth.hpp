#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "fsi/panel.hpp"

namespace fsi {

struct FactorDgpSpec {
    int m = 9;
    int r1 = 2;               // non-stationary factors
    int r2 = 1;               // stationary factors
    std::vector<int> d;       // integration order per non-stationary factor (default all 1)
    double drift = 0.0;       // drift c of the integrated factors
    double ar_coef = 0.7;     // AR(1) coefficient of the stationary factors
    double noise_scale = 0.5; // sd of the idiosyncratic noise
    int T = 1000;
    std::uint64_t seed = 1;
};

struct DgpTruth {
    Eigen::MatrixXd loadings;       // m x (r1 + r2), orthonormal
    Eigen::MatrixXd factors;        // T x (r1 + r2)
    std::vector<bool> stationary;   // per factor
    std::vector<double> monthly_gdp;  // used by the mixed-frequency DGP only
};

std::pair<TimeSeriesPanel, DgpTruth> gen_factor_panel(const FactorDgpSpec& spec);

struct MfGdpSpec {
    int months = 360;
    double rho = 0.8;          // AR(1) of latent monthly growth
    double sigma_g = 1.0;      // innovation sd of latent growth
    double xi_p = 0.7;         // variance ratios var(GDP)/var(GDP_i)
    double xi_e = 0.6;
    int n_indicators = 7;
    double indicator_noise = 2.0;
    double unemployment_loading = -0.4;
    std::uint64_t seed = 1;
};

struct MfGdpData {
    TimeSeriesPanel quarterly;   // columns gdp_p, gdp_e; rows at quarter-end months
    TimeSeriesPanel monthly;     // indicator columns + unemployment
    DgpTruth truth;              // monthly_gdp holds the latent path
};

MfGdpData gen_mf_gdp(const MfGdpSpec& spec);

}  // namespace fsi
