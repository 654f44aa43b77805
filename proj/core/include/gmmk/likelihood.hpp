#ifndef GMMK_LIKELIHOOD_HPP_
#define GMMK_LIKELIHOOD_HPP_

#include <gmmk/types.hpp>

namespace gmmk {

enum class LikelihoodKind { GaussianIdentity, BernoulliLogit };

// Log-density of the response given mu, with the first three derivatives in
// mu. W_ii = -d2_i is the Laplace working weight.
struct DerivStack {
  double logp = 0.0;
  vec_t d1;
  vec_t d2;
  vec_t d3;

  vec_t W() const { return -d2; }
};

// Numerically stable sigmoid
double sigmoid(double x);
// log(1 + exp(x)) without overflow
double log1p_exp(double x);

class Likelihood {
 public:
  explicit Likelihood(LikelihoodKind kind, double sigma2 = 1.0)
      : kind_(kind), sigma2_(sigma2) {}

  static Likelihood gaussian(double sigma2) {
    return Likelihood(LikelihoodKind::GaussianIdentity, sigma2);
  }
  static Likelihood bernoulli_logit() {
    return Likelihood(LikelihoodKind::BernoulliLogit);
  }

  LikelihoodKind kind() const { return kind_; }
  bool is_gaussian() const { return kind_ == LikelihoodKind::GaussianIdentity; }
  double sigma2() const { return sigma2_; }
  void set_sigma2(double s2) { sigma2_ = s2; }
  // number of auxiliary parameters xi (sigma^2 for Gaussian, none for Bernoulli)
  index_t num_aux() const { return is_gaussian() ? 1 : 0; }

  double log_density(const vec_t& y, const vec_t& mu) const;
  DerivStack eval_derivs(const vec_t& y, const vec_t& mu) const;

  // dlogp/dxi summed over observations (Gaussian: derivative in sigma^2)
  double dlogp_daux(const vec_t& y, const vec_t& mu) const;
  // dW_ii/dxi = -d^3 logp / dmu_i^2 dxi
  vec_t dW_daux(const vec_t& y, const vec_t& mu) const;
  // d^2 logp / dmu_i dxi (for the implicit part of aux gradients)
  vec_t d1_daux(const vec_t& y, const vec_t& mu) const;

  void check_response(const vec_t& y) const;

 private:
  LikelihoodKind kind_;
  double sigma2_;
};

}  // namespace gmmk

#endif  // GMMK_LIKELIHOOD_HPP_
