#pragma once

namespace demand::stats {

double normal_cdf(double x);
/// Two-sided p-value of a standard-normal statistic.
double normal_two_sided_p(double z);
double normal_quantile(double p);

double student_t_two_sided_p(double t, double df);
double student_t_quantile(double p, double df);

/// Upper-tail probability P(X >= w) for X ~ chi-square(df).
double chi_square_upper(double w, double df);

}  // namespace demand::stats
