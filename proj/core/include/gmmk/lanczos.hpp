#ifndef GMMK_LANCZOS_HPP_
#define GMMK_LANCZOS_HPP_

#include <gmmk/types.hpp>

#include <functional>

namespace gmmk {

// Symmetric operator given by its matrix-vector product
using LinOp = std::function<vec_t(const vec_t&)>;

struct LanczosResult {
  den_mat_t Q;   // m x r, orthonormal columns
  vec_t alpha;   // r diagonal entries of the tridiagonal T
  vec_t beta;    // r-1 off-diagonal entries
  index_t rank = 0;  // achieved rank r <= k (Krylov exhaustion stops early)
};

// Partial Lanczos with full reorthogonalization at every step.
LanczosResult lanczos_partial(const LinOp& A, const vec_t& q0, index_t k,
                              double breakdown_tol = 1e-12);

// Eigenvalues of the symmetric tridiagonal (alpha, beta)
vec_t tridiag_eigenvalues(const vec_t& alpha, const vec_t& beta);

// e_1^T f(T) e_1 for f = log, via the tridiagonal eigendecomposition
double tridiag_e1_log_e1(const vec_t& alpha, const vec_t& beta);

}  // namespace gmmk

#endif  // GMMK_LANCZOS_HPP_
