#ifndef GMMK_STE_HPP_
#define GMMK_STE_HPP_

#include <gmmk/grouped_data.hpp>
#include <gmmk/normal_matrix.hpp>
#include <gmmk/preconditioner.hpp>
#include <gmmk/slq.hpp>
#include <gmmk/types.hpp>

namespace gmmk {

// Stochastic trace estimators for log-determinant derivatives, reusing the
// CG solves retained by slq_logdet. The control variates are the matching
// derivatives of log det(P_SSOR) = log det(D); with use_cv = false (any
// non-SSOR preconditioner) the plain estimator (c = 0) is used.
class SteEngine {
 public:
  SteEngine(const IncidenceMatrix& Z, const NormalMatrix& M, const SLQCache& cache,
            bool use_cv);

  // tr(M^{-1} C) for diagonal C given by its m-vector
  double trace_diag(const vec_t& C_diag) const;

  // tr(M^{-1} Z^T diag(omega) Z) for an n-vector of observation weights
  double trace_obs_weighted(const vec_t& omega) const;

  // v_i = d log det(M) / d mu*_i = -d3_i (Z M^{-1} Z^T)_{ii}, per-coordinate
  // control variates
  vec_t mode_grad(const vec_t& d3) const;

  index_t num_probes() const { return cache_->solves.cols(); }

 private:
  const IncidenceMatrix* Z_;
  const NormalMatrix* M_;
  const SLQCache* cache_;
  bool use_cv_;
  den_mat_t g_;   // m x t: D^{-1} (L+D)^T P^{-1} z_p
  den_mat_t Zu_;  // n x t: Z M^{-1} z_p
  den_mat_t Zw_;  // n x t: Z P^{-1} z_p
  vec_t T_;       // T_i = sum_{j in levels(i)} 1 / D_jj

  // control-variate combination c*det + mean(h) - c*mean(r)
  double combine(const vec_t& h, const vec_t& r, double det) const;
};

// Stochastic estimate of the Fisher information for the variance parameters
// theta (Gaussian likelihood, W = I/sigma2), Eq.-(11)-style two-factor form
// with probes z ~ N(0, I_n). Two CG solves per probe and factor.
den_mat_t ste_fisher_information(const IncidenceMatrix& Z, const NormalMatrix& M,
                                 const Preconditioner& P, double sigma2,
                                 const ProbeSet& probes, double tol,
                                 index_t max_iter, double* asymmetry = nullptr);

}  // namespace gmmk

#endif  // GMMK_STE_HPP_
