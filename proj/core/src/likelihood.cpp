#include <gmmk/likelihood.hpp>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gmmk {

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log1p_exp(double x) {
  if (x > 35.0) return x;
  if (x < -35.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

void Likelihood::check_response(const vec_t& y) const {
  if (kind_ == LikelihoodKind::BernoulliLogit) {
    for (index_t i = 0; i < y.size(); ++i) {
      if (y[i] != 0.0 && y[i] != 1.0) {
        throw std::invalid_argument("Bernoulli response must be 0 or 1");
      }
    }
  }
}

double Likelihood::log_density(const vec_t& y, const vec_t& mu) const {
  if (y.size() != mu.size()) {
    throw std::invalid_argument("log_density: length mismatch");
  }
  const index_t n = y.size();
  double lp = 0.0;
  if (kind_ == LikelihoodKind::GaussianIdentity) {
    const double c = -0.5 * std::log(2.0 * std::numbers::pi * sigma2_);
    for (index_t i = 0; i < n; ++i) {
      const double r = y[i] - mu[i];
      lp += c - 0.5 * r * r / sigma2_;
    }
  } else {
    // log p = y*mu - log(1+exp(mu))
    for (index_t i = 0; i < n; ++i) {
      lp += y[i] * mu[i] - log1p_exp(mu[i]);
    }
  }
  return lp;
}

DerivStack Likelihood::eval_derivs(const vec_t& y, const vec_t& mu) const {
  if (y.size() != mu.size()) {
    throw std::invalid_argument("eval_derivs: length mismatch");
  }
  check_response(y);
  const index_t n = y.size();
  DerivStack s;
  s.d1.resize(n);
  s.d2.resize(n);
  s.d3.resize(n);
  s.logp = log_density(y, mu);
  if (kind_ == LikelihoodKind::GaussianIdentity) {
    s.d1 = (y - mu) / sigma2_;
    s.d2.setConstant(-1.0 / sigma2_);
    s.d3.setZero();
  } else {
    for (index_t i = 0; i < n; ++i) {
      const double p = sigmoid(mu[i]);
      const double w = p * (1.0 - p);
      s.d1[i] = y[i] - p;
      s.d2[i] = -w;
      s.d3[i] = -w * (1.0 - 2.0 * p);
    }
  }
  return s;
}

double Likelihood::dlogp_daux(const vec_t& y, const vec_t& mu) const {
  if (kind_ != LikelihoodKind::GaussianIdentity) return 0.0;
  // d/dsigma2 of -n/2 log(2 pi s2) - ||y-mu||^2/(2 s2)
  const index_t n = y.size();
  const double ss = (y - mu).squaredNorm();
  return -0.5 * n / sigma2_ + 0.5 * ss / (sigma2_ * sigma2_);
}

vec_t Likelihood::dW_daux(const vec_t& y, const vec_t& mu) const {
  if (kind_ != LikelihoodKind::GaussianIdentity) return vec_t::Zero(mu.size());
  (void)y;
  // W_ii = 1/sigma2
  return vec_t::Constant(mu.size(), -1.0 / (sigma2_ * sigma2_));
}

vec_t Likelihood::d1_daux(const vec_t& y, const vec_t& mu) const {
  if (kind_ != LikelihoodKind::GaussianIdentity) return vec_t::Zero(mu.size());
  // d1_i = (y_i - mu_i)/sigma2
  return -(y - mu) / (sigma2_ * sigma2_);
}

}  // namespace gmmk
