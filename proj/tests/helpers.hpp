#ifndef GMMK_TESTS_HELPERS_HPP_
#define GMMK_TESTS_HELPERS_HPP_

#include <gmmk/grouped_data.hpp>
#include <gmmk/normal_matrix.hpp>
#include <gmmk/preconditioner.hpp>
#include <gmmk/types.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <numeric>
#include <vector>

namespace gmmk::test {

// dense P reconstructed through the solve contract (independent of any
// internal factor representation)
inline den_mat_t dense_from_solve(const Preconditioner& P) {
  const index_t m = P.dim();
  den_mat_t Pinv(m, m);
  for (index_t j = 0; j < m; ++j) {
    vec_t e = vec_t::Zero(m);
    e[j] = 1.0;
    Pinv.col(j) = P.solve(e);
  }
  return Pinv.inverse();
}

inline den_mat_t dense_normal_matrix(const IncidenceMatrix& Z, const vec_t& W,
                                     const vec_t& sigma_inv) {
  den_mat_t Zd = den_mat_t(Z.to_sparse());
  den_mat_t M = Zd.transpose() * W.asDiagonal() * Zd;
  M += den_mat_t(sigma_inv.asDiagonal());
  return M;
}

// crossed design with uniformly random levels
inline std::vector<std::vector<index_t>> random_crossed_levels(
    index_t n, const std::vector<index_t>& m_k, RNG& rng) {
  std::vector<std::vector<index_t>> levels(m_k.size());
  for (std::size_t k = 0; k < m_k.size(); ++k) {
    std::uniform_int_distribution<index_t> pick(0, m_k[k] - 1);
    levels[k].resize(n);
    bool covered = false;
    while (!covered) {
      std::vector<char> seen(m_k[k], 0);
      for (index_t i = 0; i < n; ++i) {
        levels[k][i] = pick(rng);
        seen[levels[k][i]] = 1;
      }
      covered = std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
    }
  }
  return levels;
}

// balanced crossed design: every level of factor k occurs exactly n/m_k
// times, with n = m_k[0] * d (requires m_k | n for every factor)
inline std::vector<std::vector<index_t>> balanced_crossed_levels(
    const std::vector<index_t>& m_k, index_t d, RNG& rng) {
  const index_t n = m_k[0] * d;
  std::vector<std::vector<index_t>> levels(m_k.size());
  for (std::size_t k = 0; k < m_k.size(); ++k) {
    if (n % m_k[k] != 0) {
      throw std::invalid_argument("balanced_crossed_levels: m_k must divide n");
    }
    const index_t dk = n / m_k[k];
    levels[k].reserve(n);
    for (index_t j = 0; j < m_k[k]; ++j) {
      for (index_t r = 0; r < dk; ++r) levels[k].push_back(j);
    }
    std::shuffle(levels[k].begin(), levels[k].end(), rng);
  }
  return levels;
}

inline double dense_logdet(const den_mat_t& A) {
  Eigen::LLT<den_mat_t> llt(A);
  double ld = 0.0;
  for (index_t i = 0; i < A.rows(); ++i) ld += 2.0 * std::log(llt.matrixL()(i, i));
  return ld;
}

inline double sample_sd(const vec_t& x) {
  const double m = x.mean();
  return std::sqrt((x.array() - m).square().sum() / (x.size() - 1));
}

}  // namespace gmmk::test

#endif  // GMMK_TESTS_HELPERS_HPP_
