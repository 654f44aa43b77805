#include <gmmk/oracle.hpp>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gmmk {

DenseOracle::DenseOracle(const GroupedDesign& data, const ModelParams& params,
                         LikelihoodKind kind, index_t dim_cap)
    : data_(&data), params_(params), kind_(kind) {
  params_.validate();
  if (data.Z.cols() > dim_cap) {
    throw std::invalid_argument("DenseOracle: dimension exceeds the dense cap");
  }
}

void DenseOracle::factorize(const vec_t& W_diag, bool with_inverse) {
  const vec_t sig_inv = params_.sigma_inv_diag(data_->re.levels_per_factor);
  NormalMatrix nm = assemble_normal_matrix(data_->Z, W_diag, sig_inv);
  den_mat_t M = nm.M.to_dense();
  llt_.compute(M);
  if (llt_.info() != Eigen::Success) {
    throw std::runtime_error("DenseOracle: Cholesky factorization failed");
  }
  logdet_m_ = 0.0;
  for (index_t i = 0; i < M.rows(); ++i) {
    logdet_m_ += 2.0 * std::log(llt_.matrixL()(i, i));
  }
  if (with_inverse) {
    L_inv_ = den_mat_t::Identity(M.rows(), M.cols());
    llt_.matrixL().solveInPlace(L_inv_);
  } else {
    L_inv_.resize(0, 0);
  }
  factorized_ = true;
}

vec_t DenseOracle::quad_diag_obs() const {
  const IncidenceMatrix& Z = data_->Z;
  const index_t n = Z.rows();
  const index_t K = Z.num_factors();
  vec_t q(n);
#pragma omp parallel for schedule(static)
  for (index_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (index_t ka = 0; ka < K; ++ka) {
      const index_t a = Z.factor_offset(ka) + Z.level(ka, i);
      for (index_t kb = 0; kb < K; ++kb) {
        const index_t b = Z.factor_offset(kb) + Z.level(kb, i);
        // (M^{-1})_{ab} from the triangular inverse column dot product
        acc += L_inv_.col(a).dot(L_inv_.col(b));
      }
    }
    q[i] = acc;
  }
  return q;
}

double DenseOracle::trace_diag(const vec_t& C_diag) const {
  return (C_diag.array() * L_inv_.colwise().squaredNorm().transpose().array()).sum();
}

double DenseOracle::trace_obs_weighted(const vec_t& omega) const {
  return (omega.array() * quad_diag_obs().array()).sum();
}

den_mat_t chol_fisher(const GroupedDesign& data, const ModelParams& params,
                      index_t dim_cap) {
  const IncidenceMatrix& Z = data.Z;
  const index_t n = Z.rows();
  const index_t K = Z.num_factors();
  const double s2 = params.sigma2;
  DenseOracle oracle(data, params, LikelihoodKind::GaussianIdentity, dim_cap);
  oracle.factorize(vec_t::Constant(n, 1.0 / s2));

  // G_k = Z_k^T Psi^{-1} Z_l entries via Psi^{-1} v = v/s2 - Z M^{-1} Z^T v / s2^2
  auto psi_solve_cols = [&](index_t l) {
    const index_t ml = Z.factor_size(l);
    den_mat_t out(n, ml);
    for (index_t c = 0; c < ml; ++c) {
      vec_t ec = vec_t::Zero(ml);
      ec[c] = 1.0;
      const vec_t v = Z.mult_factor(l, ec);
      out.col(c) = v / s2 - Z.mult(oracle.solve(Z.mult_t(v))) / (s2 * s2);
    }
    return out;
  };

  den_mat_t F(K, K);
  for (index_t l = 0; l < K; ++l) {
    den_mat_t Pl = psi_solve_cols(l);  // n x m_l, Psi^{-1} Z_l
    for (index_t k = 0; k <= l; ++k) {
      // tr(Psi^{-1} Z_k Z_k^T Psi^{-1} Z_l Z_l^T) = ||Z_k^T Psi^{-1} Z_l||_F^2
      den_mat_t G(Z.factor_size(k), Z.factor_size(l));
      for (index_t c = 0; c < Z.factor_size(l); ++c) {
        G.col(c) = Z.mult_factor_t(k, Pl.col(c));
      }
      F(k, l) = 0.5 * G.squaredNorm();
      F(l, k) = F(k, l);
    }
  }
  return F;
}

double naive_gaussian_nll(const GroupedDesign& data, const ModelParams& params) {
  const index_t n = data.num_obs();
  den_mat_t Zd = den_mat_t(data.Z.to_sparse());
  vec_t sigma_diag =
      params.sigma_inv_diag(data.re.levels_per_factor).cwiseInverse();
  den_mat_t Psi = Zd * sigma_diag.asDiagonal() * Zd.transpose();
  Psi += params.sigma2 * den_mat_t::Identity(n, n);
  Eigen::LLT<den_mat_t> llt(Psi);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("naive_gaussian_nll: Psi factorization failed");
  }
  double logdet = 0.0;
  for (index_t i = 0; i < n; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  const vec_t r = data.y - data.X * params.beta;
  return 0.5 * n * std::log(2.0 * std::numbers::pi) + 0.5 * logdet +
         0.5 * r.dot(llt.solve(r));
}

}  // namespace gmmk
