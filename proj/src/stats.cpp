#include "fsi/stats.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fsi/errors.hpp"

namespace fsi {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / 1.4142135623730950488); }

namespace {

// Series expansion of P(a,x), valid for x < a+1.
double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 0; n < 500; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a,x), valid for x >= a+1 (modified Lentz).
double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-16) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gamma_p(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw NumericError("gamma_p: invalid arguments");
    if (x == 0.0) return 0.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_cf(a, x);
}

double chi2_cdf(double x, double dof) {
    if (x <= 0.0) return 0.0;
    return gamma_p(0.5 * dof, 0.5 * x);
}

double chi2_quantile(double p, int dof) {
    if (!(p > 0.0 && p < 1.0)) throw NumericError("chi2_quantile: p must be in (0,1)");
    if (dof < 1) throw NumericError("chi2_quantile: dof must be >= 1");

    // Wilson-Hilferty starting point, then safeguarded Newton on the CDF.
    const double k = static_cast<double>(dof);
    double z = 0.0;
    {
        // Inverse normal via Acklam-style rational approximation is overkill
        // here; a few Newton steps on norm_cdf from a rough cube-root guess
        // suffice since we only need a starting point.
        double lo = -40.0, hi = 40.0;
        for (int i = 0; i < 80; ++i) {
            const double mid = 0.5 * (lo + hi);
            (norm_cdf(mid) < p ? lo : hi) = mid;
        }
        z = 0.5 * (lo + hi);
    }
    const double wh = 1.0 - 2.0 / (9.0 * k) + z * std::sqrt(2.0 / (9.0 * k));
    double x = k * wh * wh * wh;
    if (!(x > 0.0)) x = 0.5 * p;  // fall back for extreme left tail

    double lo = 0.0, hi = std::max(x * 8.0 + 10.0, 1.0);
    while (chi2_cdf(hi, k) < p) hi *= 2.0;
    for (int iter = 0; iter < 200; ++iter) {
        const double f = chi2_cdf(x, k) - p;
        if (f > 0.0)
            hi = x;
        else
            lo = x;
        const double pdf =
            std::exp((0.5 * k - 1.0) * std::log(x) - 0.5 * x - 0.5 * k * std::log(2.0) -
                     std::lgamma(0.5 * k));
        double step = pdf > 0.0 ? f / pdf : 0.0;
        double next = x - step;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::fabs(next - x) <= 1e-13 * (1.0 + std::fabs(x))) {
            x = next;
            break;
        }
        x = next;
    }
    return x;
}

double ks_statistic_uniform(std::vector<double> sample) {
    if (sample.empty()) throw NumericError("ks_statistic_uniform: empty sample");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double u = std::clamp(sample[i], 0.0, 1.0);
        d = std::max(d, std::fabs((i + 1) / n - u));
        d = std::max(d, std::fabs(u - i / n));
    }
    return d;
}

double ks_critical_5pct(std::size_t n) { return 1.36 / std::sqrt(static_cast<double>(n)); }

}  // namespace fsi
