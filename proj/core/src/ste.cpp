#include <gmmk/ste.hpp>

#include <gmmk/cg.hpp>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace gmmk {

namespace {

// sample covariance/variance-based optimal weight, with degenerate fallback
double optimal_weight(const vec_t& h, const vec_t& r) {
  const index_t t = h.size();
  if (t < 2) return 0.0;
  const double hm = h.mean(), rm = r.mean();
  double cov = 0.0, var = 0.0;
  for (index_t i = 0; i < t; ++i) {
    cov += (h[i] - hm) * (r[i] - rm);
    var += (r[i] - rm) * (r[i] - rm);
  }
  if (var <= 1e-300) return 0.0;
  return cov / var;
}

}  // namespace

SteEngine::SteEngine(const IncidenceMatrix& Z, const NormalMatrix& M,
                     const SLQCache& cache, bool use_cv)
    : Z_(&Z), M_(&M), cache_(&cache), use_cv_(use_cv) {
  const index_t t = cache.psolves.cols();
  const index_t n = Z.rows();
  // g_p = D^{-1} (L+D)^T w_p with w_p = P^{-1} z_p
  g_ = M.L_plus_D.transpose() * cache.psolves;
  g_.array().colwise() /= M.D.array();
  Zu_.resize(n, t);
  Zw_.resize(n, t);
  for (index_t p = 0; p < t; ++p) {
    Zu_.col(p) = Z.mult(cache.solves.col(p));
    Zw_.col(p) = Z.mult(cache.psolves.col(p));
  }
  T_.resize(n);
  const vec_t Dinv = M.D.cwiseInverse();
  T_ = Z.mult(Dinv);
}

double SteEngine::combine(const vec_t& h, const vec_t& r, double det) const {
  const double c = use_cv_ ? optimal_weight(h, r) : 0.0;
  return c * det + h.mean() - c * r.mean();
}

double SteEngine::trace_diag(const vec_t& C_diag) const {
  const index_t t = num_probes();
  vec_t h(t), r(t);
  for (index_t p = 0; p < t; ++p) {
    const auto u = cache_->solves.col(p);
    const auto w = cache_->psolves.col(p);
    const auto g = g_.col(p);
    h[p] = (C_diag.array() * u.array() * w.array()).sum();
    r[p] = (C_diag.array() * g.array() * (2.0 * w.array() - g.array())).sum();
  }
  const double det = (C_diag.array() / M_->D.array()).sum();
  return combine(h, r, det);
}

double SteEngine::trace_obs_weighted(const vec_t& omega) const {
  const index_t t = num_probes();
  const index_t n = Z_->rows();
  const index_t K = Z_->num_factors();
  vec_t h(t), r(t);
  for (index_t p = 0; p < t; ++p) {
    h[p] = (omega.array() * Zu_.col(p).array() * Zw_.col(p).array()).sum();
    const auto w = cache_->psolves.col(p);
    const auto g = g_.col(p);
    double rp = 0.0;
    for (index_t i = 0; i < n; ++i) {
      // lower triangle of z_i z_i^T over the K level columns of observation i
      double s1 = 0.0, s2 = 0.0;
      for (index_t ka = 0; ka < K; ++ka) {
        const index_t a = Z_->factor_offset(ka) + Z_->level(ka, i);
        s2 += g[a] * g[a];
        for (index_t kb = 0; kb < K; ++kb) {
          const index_t b = Z_->factor_offset(kb) + Z_->level(kb, i);
          if (a >= b) s1 += w[a] * g[b];
        }
      }
      rp += omega[i] * (2.0 * s1 - s2);
    }
    r[p] = rp;
  }
  const double det = (omega.array() * T_.array()).sum();
  return combine(h, r, det);
}

vec_t SteEngine::mode_grad(const vec_t& d3) const {
  const index_t t = num_probes();
  const index_t n = Z_->rows();
  const index_t K = Z_->num_factors();
  // per-coordinate running moments of h_i and r_i over probes
  vec_t sh = vec_t::Zero(n), sr = vec_t::Zero(n);
  vec_t shr = vec_t::Zero(n), srr = vec_t::Zero(n);
  for (index_t p = 0; p < t; ++p) {
    const auto w = cache_->psolves.col(p);
    const auto g = g_.col(p);
    for (index_t i = 0; i < n; ++i) {
      const double hi = Zu_(i, p) * Zw_(i, p);
      double s1 = 0.0, s2 = 0.0;
      for (index_t ka = 0; ka < K; ++ka) {
        const index_t a = Z_->factor_offset(ka) + Z_->level(ka, i);
        s2 += g[a] * g[a];
        for (index_t kb = 0; kb < K; ++kb) {
          const index_t b = Z_->factor_offset(kb) + Z_->level(kb, i);
          if (a >= b) s1 += w[a] * g[b];
        }
      }
      const double ri = 2.0 * s1 - s2;
      sh[i] += hi;
      sr[i] += ri;
      shr[i] += hi * ri;
      srr[i] += ri * ri;
    }
  }
  vec_t v(n);
  const double td = static_cast<double>(t);
  for (index_t i = 0; i < n; ++i) {
    const double hm = sh[i] / td, rm = sr[i] / td;
    double c = 0.0;
    if (use_cv_ && t >= 2) {
      const double var = srr[i] - td * rm * rm;
      const double cov = shr[i] - td * hm * rm;
      if (var > 1e-300) c = cov / var;
    }
    // (Z M^{-1} Z^T)_{ii} estimate times -d3_i
    v[i] = -d3[i] * (c * T_[i] + hm - c * rm);
  }
  return v;
}

den_mat_t ste_fisher_information(const IncidenceMatrix& Z, const NormalMatrix& M,
                                 const Preconditioner& P, double sigma2,
                                 const ProbeSet& probes, double tol,
                                 index_t max_iter, double* asymmetry) {
  if (probes.kind != ProbeKind::GaussianI) {
    throw std::invalid_argument("ste_fisher_information: probes must be GaussianI");
  }
  const index_t n = Z.rows();
  const index_t K = Z.num_factors();
  const index_t t = probes.count;
  const double s4 = sigma2 * sigma2;

  // Psi^{-1} v = v/sigma2 - Z M^{-1} Z^T v / sigma2^2 (Woodbury)
  auto psi_solve = [&](const vec_t& v) {
    const vec_t rhs = Z.mult_t(v);
    CGResult cg = pcg_solve(M, P, rhs, tol, max_iter);
    return vec_t(v / sigma2 - Z.mult(cg.u) / s4);
  };

  std::vector<den_mat_t> contrib(t, den_mat_t::Zero(K, K));
#pragma omp parallel for schedule(dynamic)
  for (index_t p = 0; p < t; ++p) {
    const vec_t z = materialize_probe(probes, p, n);
    const vec_t q1 = psi_solve(z);
    std::vector<vec_t> zk_q1(K);
    for (index_t k = 0; k < K; ++k) zk_q1[k] = Z.mult_factor_t(k, q1);
    for (index_t l = 0; l < K; ++l) {
      const vec_t tau = Z.mult_factor(l, Z.mult_factor_t(l, z));
      const vec_t q2 = psi_solve(tau);
      for (index_t k = 0; k < K; ++k) {
        contrib[p](k, l) = zk_q1[k].dot(Z.mult_factor_t(k, q2));
      }
    }
  }
  den_mat_t F = den_mat_t::Zero(K, K);
  for (index_t p = 0; p < t; ++p) F += contrib[p];
  F /= (2.0 * t);
  const double asym = (F - F.transpose()).cwiseAbs().maxCoeff();
  if (asymmetry != nullptr) *asymmetry = asym;
  F = 0.5 * (F + F.transpose()).eval();
  return F;
}

}  // namespace gmmk
