#ifndef GMMK_SLQ_HPP_
#define GMMK_SLQ_HPP_

#include <gmmk/cg.hpp>
#include <gmmk/normal_matrix.hpp>
#include <gmmk/preconditioner.hpp>
#include <gmmk/types.hpp>

namespace gmmk {

enum class ProbeKind { GaussianP, GaussianI, Rademacher };

// A fixed set of t probe vectors. Vector i is materialized from
// make_rng(seed, i), so probes are reproducible, order-independent, and
// stay frozen across optimizer iterations (sample average approximation).
struct ProbeSet {
  index_t count = 50;
  ProbeKind kind = ProbeKind::GaussianP;
  std::uint64_t seed = 0;

  ProbeSet() = default;
  ProbeSet(index_t t, ProbeKind k, std::uint64_t s) : count(t), kind(k), seed(s) {}
};

// Draw probe i; GaussianP samples z ~ N(0, P) through the preconditioner.
vec_t materialize_probe(const ProbeSet& probes, index_t i, index_t dim,
                        const Preconditioner* P = nullptr);

// Per-probe CG byproducts retained for the stochastic trace estimators.
struct SLQCache {
  den_mat_t probes;   // m x t, z_i
  den_mat_t solves;   // m x t, M^{-1} z_i
  den_mat_t psolves;  // m x t, P^{-1} z_i
  vec_t weights;      // z_i^T P^{-1} z_i = ||P^{-1/2} z_i||^2
  index_t num_unconverged = 0;
};

struct SLQEstimate {
  double logdet = 0.0;   // logdet(P) + mean stochastic remainder
  double logdet_p = 0.0;
  vec_t per_probe;       // per-probe remainder contributions
  index_t t = 0;
  double mean_cg_iters = 0.0;
  index_t max_cg_iters = 0;
  index_t num_unconverged = 0;

  // sample standard deviation of the per-probe contributions
  double remainder_sd() const;
};

// log det(M) = log det(P) + log det(P^{-1/2} M P^{-T/2}), the second term
// estimated by stochastic Lanczos quadrature with the tridiagonal matrices
// captured from the preconditioned CG runs. Probes must be GaussianP.
SLQEstimate slq_logdet(const NormalMatrix& M, const Preconditioner& P,
                       const ProbeSet& probes, double tol, index_t max_iter,
                       SLQCache* cache = nullptr);

}  // namespace gmmk

#endif  // GMMK_SLQ_HPP_
