#include "longimpute/stats.hpp"

#include <cmath>
#include <limits>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace longimpute::stats {

namespace bm = boost::math;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_quantile(double p) { return bm::quantile(bm::normal_distribution<>(), p); }

double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

double chi2_upper_tail(double statistic, double df) {
    if (df <= 0.0) return 1.0;
    if (statistic <= 0.0) return 1.0;
    return bm::cdf(bm::complement(bm::chi_squared_distribution<>(df), statistic));
}

double student_t_two_sided_p(double t, double df) {
    // Above ~1e9 df the t and normal references agree to double precision.
    if (!std::isfinite(df) || df > 1e9) return normal_two_sided_p(t);
    return 2.0 * bm::cdf(bm::complement(bm::students_t_distribution<>(df), std::abs(t)));
}

double student_t_quantile(double p, double df) {
    if (!std::isfinite(df) || df > 1e9) return normal_quantile(p);
    return bm::quantile(bm::students_t_distribution<>(df), p);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

double inv_logit(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace longimpute::stats
