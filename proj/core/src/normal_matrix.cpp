#include <gmmk/normal_matrix.hpp>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace gmmk {

vec_t matvec(const sp_mat_t& A, const vec_t& x) {
  if (A.cols() != x.size()) {
    throw std::invalid_argument("matvec: dimension mismatch");
  }
  vec_t y(A.rows());
  // rows are independent, per-row reduction order is fixed
#pragma omp parallel for schedule(static)
  for (index_t i = 0; i < A.rows(); ++i) {
    double acc = 0.0;
    for (sp_mat_t::InnerIterator it(A, i); it; ++it) {
      acc += it.value() * x[it.col()];
    }
    y[i] = acc;
  }
  return y;
}

vec_t SparseSym::matvec(const vec_t& x) const { return gmmk::matvec(mat, x); }

void SparseSym::validate(double tol) const {
  for (index_t i = 0; i < mat.rows(); ++i) {
    for (sp_mat_t::InnerIterator it(mat, i); it; ++it) {
      if (!std::isfinite(it.value())) {
        throw std::runtime_error("SparseSym: non-finite entry");
      }
      if (symmetric && std::fabs(it.value() - mat.coeff(it.col(), i)) > tol) {
        throw std::runtime_error("SparseSym: entry (i,j) != entry (j,i)");
      }
    }
  }
}

NormalMatrix assemble_normal_matrix(const IncidenceMatrix& Z, const vec_t& W_diag,
                                    const vec_t& Sigma_inv_diag) {
  const index_t n = Z.rows();
  const index_t m = Z.cols();
  const index_t K = Z.num_factors();
  if (W_diag.size() != n) {
    throw std::invalid_argument("assemble_normal_matrix: W_diag length != n");
  }
  if (Sigma_inv_diag.size() != m) {
    throw std::invalid_argument("assemble_normal_matrix: Sigma_inv_diag length != m");
  }
  if ((Sigma_inv_diag.array() <= 0.0).any()) {
    throw std::invalid_argument("assemble_normal_matrix: Sigma_inv_diag must be > 0");
  }

  // D = Sigma^{-1} + diag(Z^T W Z); the diagonal blocks Z_k^T W Z_k are
  // diagonal since Z_k has one nonzero per row.
  vec_t D = Sigma_inv_diag;
  for (index_t k = 0; k < K; ++k) {
    const index_t off = Z.factor_offset(k);
    for (index_t i = 0; i < n; ++i) {
      D[off + Z.level(k, i)] += W_diag[i];
    }
  }

  // Off-diagonal blocks (Z_j^T W Z_k)_{ab} = sum of W_ii over co-occurrences
  std::vector<Triplet> lower_trips;
  lower_trips.reserve(static_cast<std::size_t>(n) * K * (K - 1) / 2);
  for (index_t k = 0; k < K; ++k) {
    for (index_t j = k + 1; j < K; ++j) {
      const index_t off_k = Z.factor_offset(k);
      const index_t off_j = Z.factor_offset(j);
      for (index_t i = 0; i < n; ++i) {
        // j > k so the (j, k) block is below the diagonal
        lower_trips.emplace_back(off_j + Z.level(j, i), off_k + Z.level(k, i),
                                 W_diag[i]);
      }
    }
  }
  sp_mat_t L(m, m);
  L.setFromTriplets(lower_trips.begin(), lower_trips.end());
  L.prune(0.0, 0.0);  // W entries of 0 leave no structural nonzeros

  NormalMatrix nm;
  nm.D = std::move(D);
  nm.L = std::move(L);

  std::vector<Triplet> full_trips;
  full_trips.reserve(2 * nm.L.nonZeros() + m);
  std::vector<Triplet> ld_trips;
  ld_trips.reserve(nm.L.nonZeros() + m);
  for (index_t i = 0; i < m; ++i) {
    for (sp_mat_t::InnerIterator it(nm.L, i); it; ++it) {
      full_trips.emplace_back(it.row(), it.col(), it.value());
      full_trips.emplace_back(it.col(), it.row(), it.value());
      ld_trips.emplace_back(it.row(), it.col(), it.value());
    }
    full_trips.emplace_back(i, i, nm.D[i]);
    ld_trips.emplace_back(i, i, nm.D[i]);
  }
  nm.M.mat = sp_mat_t(m, m);
  nm.M.mat.setFromTriplets(full_trips.begin(), full_trips.end());
  nm.M.symmetric = true;
  nm.L_plus_D = sp_mat_t(m, m);
  nm.L_plus_D.setFromTriplets(ld_trips.begin(), ld_trips.end());
  return nm;
}

NormalMatrix split_normal_matrix(SparseSym M) {
  const index_t m = M.dim();
  NormalMatrix nm;
  nm.D = vec_t::Zero(m);
  std::vector<Triplet> lower_trips, ld_trips;
  for (index_t i = 0; i < m; ++i) {
    for (sp_mat_t::InnerIterator it(M.mat, i); it; ++it) {
      if (it.col() == i) {
        nm.D[i] = it.value();
      } else if (it.col() < i) {
        lower_trips.emplace_back(i, it.col(), it.value());
        ld_trips.emplace_back(i, it.col(), it.value());
      }
    }
    ld_trips.emplace_back(i, i, M.mat.coeff(i, i));
  }
  nm.L = sp_mat_t(m, m);
  nm.L.setFromTriplets(lower_trips.begin(), lower_trips.end());
  nm.L_plus_D = sp_mat_t(m, m);
  nm.L_plus_D.setFromTriplets(ld_trips.begin(), ld_trips.end());
  nm.M = std::move(M);
  return nm;
}

}  // namespace gmmk
