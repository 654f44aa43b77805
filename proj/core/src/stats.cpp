#include <gmmk/stats.hpp>

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <numbers>

namespace gmmk {

double chi_squared_quantile(double df, double p) {
  boost::math::chi_squared_distribution<double> dist(df);
  return boost::math::quantile(dist, p);
}

double normal_log_pdf(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * r * r / var;
}

}  // namespace gmmk
