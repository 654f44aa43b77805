#ifndef GMMK_NORMAL_MATRIX_HPP_
#define GMMK_NORMAL_MATRIX_HPP_

#include <gmmk/grouped_data.hpp>
#include <gmmk/types.hpp>

namespace gmmk {

// Sparse symmetric matrix in CSR layout with a symmetry flag.
struct SparseSym {
  sp_mat_t mat;          // full (both triangles stored)
  bool symmetric = true;

  index_t dim() const { return mat.rows(); }
  vec_t matvec(const vec_t& x) const;
  den_mat_t to_dense() const { return den_mat_t(mat); }

  // checks finiteness and pairwise symmetry of stored entries
  void validate(double tol = 0.0) const;
};

// y = A x for a general sparse matrix (CSR), dimension-checked
vec_t matvec(const sp_mat_t& A, const vec_t& x);

// The m x m system matrix M = Sigma^{-1} + Z^T W Z together with its cached
// split M = L + L^T + D (D diagonal, L strictly lower triangular).
struct NormalMatrix {
  SparseSym M;
  vec_t D;            // diag(M)
  sp_mat_t L;         // strictly lower triangle of M
  sp_mat_t L_plus_D;  // lower triangle incl. diagonal (for SSOR solves)

  index_t dim() const { return M.dim(); }
  vec_t matvec(const vec_t& x) const { return M.matvec(x); }
};

// Assembles M = Sigma^{-1} + Z^T W Z. W_diag has length n (>= 0 entries),
// Sigma_inv_diag has length m (> 0 entries).
NormalMatrix assemble_normal_matrix(const IncidenceMatrix& Z, const vec_t& W_diag,
                                    const vec_t& Sigma_inv_diag);

// Splits an arbitrary sparse symmetric SPD matrix into the same cached form
// (used by tests and the spectral module on matrices not of Z^T W Z type).
NormalMatrix split_normal_matrix(SparseSym M);

}  // namespace gmmk

#endif  // GMMK_NORMAL_MATRIX_HPP_
