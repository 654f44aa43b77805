#include <gmmk/slq.hpp>

#include <gmmk/lanczos.hpp>

#include <cmath>
#include <stdexcept>

namespace gmmk {

vec_t materialize_probe(const ProbeSet& probes, index_t i, index_t dim,
                        const Preconditioner* P) {
  RNG rng = make_rng(probes.seed, static_cast<std::uint64_t>(i));
  switch (probes.kind) {
    case ProbeKind::GaussianP: {
      if (P == nullptr) {
        throw std::invalid_argument("materialize_probe: GaussianP needs P");
      }
      return P->sample(rng);
    }
    case ProbeKind::GaussianI: {
      std::normal_distribution<double> ndist(0.0, 1.0);
      vec_t z(dim);
      for (index_t j = 0; j < dim; ++j) z[j] = ndist(rng);
      return z;
    }
    case ProbeKind::Rademacher: {
      std::uniform_real_distribution<double> udist(0.0, 1.0);
      vec_t z(dim);
      for (index_t j = 0; j < dim; ++j) z[j] = udist(rng) > 0.5 ? 1.0 : -1.0;
      return z;
    }
  }
  throw std::logic_error("materialize_probe: unreachable");
}

double SLQEstimate::remainder_sd() const {
  if (t < 2) return 0.0;
  const double mean = per_probe.mean();
  return std::sqrt((per_probe.array() - mean).square().sum() / (t - 1));
}

SLQEstimate slq_logdet(const NormalMatrix& M, const Preconditioner& P,
                       const ProbeSet& probes, double tol, index_t max_iter,
                       SLQCache* cache) {
  if (probes.kind != ProbeKind::GaussianP) {
    throw std::invalid_argument("slq_logdet: probes must be GaussianP");
  }
  const index_t m = M.dim();
  const index_t t = probes.count;
  SLQEstimate est;
  est.t = t;
  est.logdet_p = P.logdet();
  est.per_probe.resize(t);

  if (cache != nullptr) {
    cache->probes.resize(m, t);
    cache->solves.resize(m, t);
    cache->psolves.resize(m, t);
    cache->weights.resize(t);
    cache->num_unconverged = 0;
  }

  vec_t iters(t);
  index_t unconv = 0;
#pragma omp parallel for schedule(dynamic) reduction(+ : unconv)
  for (index_t i = 0; i < t; ++i) {
    const vec_t z = materialize_probe(probes, i, m, &P);
    CGResult cg = pcg_solve(M, P, z, tol, max_iter, /*capture_tridiag=*/true);
    if (!cg.converged) ++unconv;
    // Gamma_hat term: ||P^{-1/2} z_i||^2 e_1^T log(T_i) e_1
    est.per_probe[i] =
        cg.rhs_inv_quad * tridiag_e1_log_e1(cg.tridiag_alpha, cg.tridiag_beta);
    iters[i] = static_cast<double>(cg.iterations);
    if (cache != nullptr) {
      cache->probes.col(i) = z;
      cache->solves.col(i) = cg.u;
      cache->psolves.col(i) = P.solve(z);
      cache->weights[i] = cg.rhs_inv_quad;
    }
  }
  est.num_unconverged = unconv;
  if (cache != nullptr) cache->num_unconverged = unconv;
  est.mean_cg_iters = iters.mean();
  est.max_cg_iters = static_cast<index_t>(iters.maxCoeff());
  est.logdet = est.logdet_p + est.per_probe.mean();
  return est;
}

}  // namespace gmmk
