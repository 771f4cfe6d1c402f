#pragma once

#include <vector>

namespace fsi {

// Standard normal CDF.
double norm_cdf(double x);

// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);

// Chi-square CDF with dof degrees of freedom.
double chi2_cdf(double x, double dof);

// Inverse chi-square CDF; relative error below 1e-9. Throws NumericError for
// p outside (0,1) or dof < 1.
double chi2_quantile(double p, int dof);

// One-sample Kolmogorov-Smirnov distance against Uniform(0,1).
double ks_statistic_uniform(std::vector<double> sample);

// Asymptotic 5% KS critical value, 1.36/sqrt(n).
double ks_critical_5pct(std::size_t n);

}  // namespace fsi
