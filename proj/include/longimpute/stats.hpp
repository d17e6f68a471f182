#pragma once

namespace longimpute::stats {

double normal_cdf(double z);
double normal_quantile(double p);
// Two-sided p-value for a standard normal statistic.
double normal_two_sided_p(double z);
double chi2_upper_tail(double statistic, double df);
double student_t_two_sided_p(double t, double df);
double student_t_quantile(double p, double df);
double logit(double p);
double inv_logit(double x);

}  // namespace longimpute::stats
