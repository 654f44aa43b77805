#ifndef GMMK_OPTIMIZER_HPP_
#define GMMK_OPTIMIZER_HPP_

#include <gmmk/inference.hpp>
#include <gmmk/ste.hpp>

#include <string>
#include <vector>

namespace gmmk {

struct OptimizerConfig {
  index_t max_iters = 1000;
  double grad_tol = 1e-5;     // infinity norm of the packed gradient
  double rel_obj_tol = 1e-8;  // relative nll change
  index_t max_halvings = 30;
  // optional Fisher-scoring acceleration for theta on the Gaussian path
  bool fisher_scoring = false;
  index_t fisher_probes = 50;
  bool compute_std_errors = true;
};

struct FitResult {
  ModelParams params;
  LikelihoodKind likelihood = LikelihoodKind::GaussianIdentity;
  Backend backend = Backend::Krylov;
  KrylovConfig krylov;

  std::vector<double> nll_trace;
  index_t iterations = 0;
  std::string convergence_reason;
  vec_t final_gradient;

  den_mat_t fisher;          // K x K, Gaussian path only
  vec_t std_errors_sigma2;   // sqrt diag of the inverse Fisher
  bool fisher_singular = false;

  ModeState mode;            // final mode (non-Gaussian likelihoods)
  double wall_seconds = 0.0;
  index_t nll_evaluations = 0;
  bool zic_fallback = false;

  double final_nll() const { return nll_trace.empty() ? 0.0 : nll_trace.back(); }
};

// Heuristic starting values: sigma_k^2 = var(y)/(K+1), sigma^2 = var(y)/2,
// beta = 0 (Bernoulli uses var of the +-1-coded response scale-free).
ModelParams default_init(const GroupedDesign& data, LikelihoodKind kind);

// Maximizes the (approximate) log-marginal likelihood by gradient descent
// with Armijo backtracking on (log sigma_k^2, log sigma^2, beta), probes
// frozen across iterations (SAA).
FitResult fit(const GroupedDesign& data, LikelihoodKind kind, const ModelParams& init,
              Backend backend, const KrylovConfig& kcfg, const OptimizerConfig& ocfg);

// sqrt of the diagonal of the inverse Fisher matrix; empty + flag on a
// singular estimate
vec_t std_errors_from_fisher(const den_mat_t& fisher, bool* singular);

}  // namespace gmmk

#endif  // GMMK_OPTIMIZER_HPP_
