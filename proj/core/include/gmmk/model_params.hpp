#ifndef GMMK_MODEL_PARAMS_HPP_
#define GMMK_MODEL_PARAMS_HPP_

#include <gmmk/types.hpp>

#include <stdexcept>

namespace gmmk {

// Variance components, error variance, and regression coefficients.
struct ModelParams {
  vec_t sigma2_re;   // sigma_k^2, one per grouping factor
  double sigma2 = 1.0;  // Gaussian error variance (ignored for Bernoulli)
  vec_t beta;        // regression coefficients (incl. intercept)

  index_t num_factors() const { return sigma2_re.size(); }

  void validate() const {
    if ((sigma2_re.array() <= 0.0).any()) {
      throw std::invalid_argument("ModelParams: sigma2_re entries must be > 0");
    }
    if (sigma2 <= 0.0) {
      throw std::invalid_argument("ModelParams: sigma2 must be > 0");
    }
  }

  // diag(Sigma^{-1}) expanded over the m total levels
  vec_t sigma_inv_diag(const std::vector<index_t>& levels_per_factor) const {
    index_t m = 0;
    for (auto mk : levels_per_factor) m += mk;
    vec_t d(m);
    index_t off = 0;
    for (index_t k = 0; k < num_factors(); ++k) {
      d.segment(off, levels_per_factor[k]).setConstant(1.0 / sigma2_re[k]);
      off += levels_per_factor[k];
    }
    return d;
  }
};

}  // namespace gmmk

#endif  // GMMK_MODEL_PARAMS_HPP_
