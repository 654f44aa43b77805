#ifndef GMMK_CG_HPP_
#define GMMK_CG_HPP_

#include <gmmk/normal_matrix.hpp>
#include <gmmk/preconditioner.hpp>
#include <gmmk/types.hpp>

namespace gmmk {

struct CGResult {
  vec_t u;
  index_t iterations = 0;
  double residual_norm = 0.0;
  bool converged = false;
  // Lanczos tridiagonal of P^{-1/2} M P^{-T/2} captured from the CG
  // coefficients: diag 1/alpha_{l+1} + beta_l/alpha_l, offdiag sqrt(beta_l)/alpha_l
  vec_t tridiag_alpha;
  vec_t tridiag_beta;
  // b^T P^{-1} b, a free byproduct on cold starts (SLQ probe weight)
  double rhs_inv_quad = 0.0;
};

// Preconditioned conjugate gradient for M u = v. tol is the absolute
// residual norm target (tol = 0 runs exactly max_iter iterations).
// Non-convergence is reported via converged = false; NaN iterates and
// h^T v <= 0 breakdowns throw (M is SPD by construction, so these signal
// broken inputs). capture_tridiag requires a cold start.
CGResult pcg_solve(const NormalMatrix& M, const Preconditioner& P, const vec_t& v,
                   double tol, index_t max_iter, bool capture_tridiag = false,
                   const vec_t* warm_start = nullptr);

}  // namespace gmmk

#endif  // GMMK_CG_HPP_
