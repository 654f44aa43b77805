#include <gmmk/lanczos.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>

namespace gmmk {

LanczosResult lanczos_partial(const LinOp& A, const vec_t& q0, index_t k,
                              double breakdown_tol) {
  const index_t m = q0.size();
  const double q0_norm = q0.norm();
  if (q0_norm <= 0.0) {
    throw std::invalid_argument("lanczos_partial: start vector has zero norm");
  }
  k = std::min(k, m);
  LanczosResult res;
  res.Q.resize(m, k);
  res.alpha.resize(k);
  res.beta.resize(k > 0 ? k - 1 : 0);

  vec_t q = q0 / q0_norm;
  res.Q.col(0) = q;
  vec_t w;
  for (index_t j = 0; j < k; ++j) {
    w = A(res.Q.col(j));
    res.alpha[j] = res.Q.col(j).dot(w);
    w -= res.alpha[j] * res.Q.col(j);
    if (j > 0) {
      w -= res.beta[j - 1] * res.Q.col(j - 1);
    }
    // full reorthogonalization, two passes
    for (int pass = 0; pass < 2; ++pass) {
      w -= res.Q.leftCols(j + 1) * (res.Q.leftCols(j + 1).transpose() * w);
    }
    const double b = w.norm();
    if (j + 1 == k) {
      res.rank = k;
      break;
    }
    if (b <= breakdown_tol) {
      // Krylov space exhausted
      res.rank = j + 1;
      res.Q.conservativeResize(m, res.rank);
      res.alpha.conservativeResize(res.rank);
      res.beta.conservativeResize(res.rank > 0 ? res.rank - 1 : 0);
      return res;
    }
    res.beta[j] = b;
    res.Q.col(j + 1) = w / b;
  }
  res.rank = k;
  return res;
}

vec_t tridiag_eigenvalues(const vec_t& alpha, const vec_t& beta) {
  Eigen::SelfAdjointEigenSolver<den_mat_t> es;
  es.computeFromTridiagonal(alpha, beta, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

double tridiag_e1_log_e1(const vec_t& alpha, const vec_t& beta) {
  Eigen::SelfAdjointEigenSolver<den_mat_t> es;
  es.computeFromTridiagonal(alpha, beta);
  if ((es.eigenvalues().array() <= 0.0).any()) {
    throw std::runtime_error(
        "tridiag_e1_log_e1: nonpositive Ritz value, matrix not SPD");
  }
  const vec_t first_row = es.eigenvectors().row(0);
  return (first_row.array().square() * es.eigenvalues().array().log()).sum();
}

}  // namespace gmmk
