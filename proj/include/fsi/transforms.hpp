#pragma once

#include <vector>

namespace fsi {

// Drawdown indicator: 1 - x_t / max(x_{t-j}, j=0..W-1), truncated windows at
// the start. Requires strictly positive inputs.
std::vector<double> cmax(const std::vector<double>& series, int window = 60);

// Exponentially weighted standard deviation of daily log changes. Entries
// before `burn_in` log-changes are NaN. Lookback is capped at 300
// observations (decay^300 is far below the 1e-6 weight cutoff for the 0.94
// default).
std::vector<double> ewsd(const std::vector<double>& series, double decay = 0.94,
                         int burn_in = 20);

std::vector<double> corp_spread(const std::vector<double>& corp_yield,
                                const std::vector<double>& govt_yield);

enum class AdfSpec { Constant, ConstantTrend };
enum class AdfLagRule { Fixed, Bic };

struct AdfResult {
    double statistic = 0.0;  // t-ratio on the lagged level
    double p_value = 1.0;
    int lags_used = 0;
    AdfSpec spec = AdfSpec::Constant;
    bool p_value_clamped = false;  // hit the [0.001, 0.999] reporting floor
};

// Augmented Dickey-Fuller regression with MacKinnon response-surface
// p-values. max_lags < 0 selects the Schwert bound 12*(T/100)^{1/4}.
AdfResult adf_test(const std::vector<double>& series, AdfSpec spec = AdfSpec::Constant,
                   int max_lags = -1, AdfLagRule lag_rule = AdfLagRule::Bic);

// Response-surface p-value for an ADF t-ratio (univariate case).
double mackinnon_p(double stat, AdfSpec spec);

}  // namespace fsi
