#ifndef GMMK_ORACLE_HPP_
#define GMMK_ORACLE_HPP_

#include <gmmk/grouped_data.hpp>
#include <gmmk/likelihood.hpp>
#include <gmmk/model_params.hpp>
#include <gmmk/normal_matrix.hpp>
#include <gmmk/types.hpp>

#include <Eigen/Cholesky>

namespace gmmk {

// Exact dense-Cholesky reference for every quantity the Krylov path
// approximates. Dense on purpose: auditable, capped in size, not fast.
class DenseOracle {
 public:
  DenseOracle(const GroupedDesign& data, const ModelParams& params,
              LikelihoodKind kind, index_t dim_cap = 5000);

  // factorize M = Sigma^{-1} + Z^T W Z for the given diagonal W; the
  // triangular inverse behind the trace helpers is skipped when only the
  // log-determinant and solves are needed
  void factorize(const vec_t& W_diag, bool with_inverse = true);

  double logdet_m() const { return logdet_m_; }
  vec_t solve(const vec_t& rhs) const { return llt_.solve(rhs); }

  // exact (Z M^{-1} Z^T)_{ii} over observations, O(K^2) lookups per row
  vec_t quad_diag_obs() const;
  // exact tr(M^{-1} C) for diagonal C
  double trace_diag(const vec_t& C_diag) const;
  // exact tr(M^{-1} Z^T diag(omega) Z)
  double trace_obs_weighted(const vec_t& omega) const;

  const GroupedDesign& data() const { return *data_; }
  const ModelParams& params() const { return params_; }
  LikelihoodKind kind() const { return kind_; }

 private:
  const GroupedDesign* data_;
  ModelParams params_;
  LikelihoodKind kind_;
  Eigen::LLT<den_mat_t> llt_;
  den_mat_t L_inv_;  // M^{-1} = L_inv^T L_inv, entries via column dots
  double logdet_m_ = 0.0;
  bool factorized_ = false;
};

// Exact Fisher information for theta (Gaussian likelihood), Eq.-(7) traces
// evaluated through the Woodbury identity with a dense M factorization.
den_mat_t chol_fisher(const GroupedDesign& data, const ModelParams& params,
                      index_t dim_cap = 5000);

// Naive dense n x n evaluation of the Gaussian marginal likelihood
// (builds Psi explicitly, no Woodbury); validation-only reference.
double naive_gaussian_nll(const GroupedDesign& data, const ModelParams& params);

}  // namespace gmmk

#endif  // GMMK_ORACLE_HPP_
