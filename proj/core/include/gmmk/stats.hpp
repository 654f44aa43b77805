#ifndef GMMK_STATS_HPP_
#define GMMK_STATS_HPP_

namespace gmmk {

// quantile of the chi-squared distribution with df degrees of freedom
double chi_squared_quantile(double df, double p);

// standard normal density and log-density
double normal_log_pdf(double x, double mean, double var);

}  // namespace gmmk

#endif  // GMMK_STATS_HPP_
