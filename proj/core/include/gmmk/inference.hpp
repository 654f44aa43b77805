#ifndef GMMK_INFERENCE_HPP_
#define GMMK_INFERENCE_HPP_

#include <gmmk/grouped_data.hpp>
#include <gmmk/likelihood.hpp>
#include <gmmk/model_params.hpp>
#include <gmmk/normal_matrix.hpp>
#include <gmmk/preconditioner.hpp>
#include <gmmk/slq.hpp>
#include <gmmk/types.hpp>

#include <string>

namespace gmmk {

enum class Backend { Krylov, Cholesky };

std::string backend_name(Backend b);
Backend parse_backend(const std::string& name);

// Knobs of the Krylov path. probe_seed freezes the SLQ/STE probes across
// optimizer iterations (sample average approximation); re-seeding is an
// explicit caller action.
struct KrylovConfig {
  PrecondKind precond = PrecondKind::SSOR;
  index_t num_probes = 50;       // t for SLQ/STE
  index_t lowrank_rank = 50;     // k for the low-rank preconditioners
  double cg_tol = 1e-2;          // likelihood/gradient solves
  double cg_tol_predict = 1e-3;  // prediction solves
  index_t cg_max_iter = 1000;
  std::uint64_t probe_seed = 0;
};

struct ModeState {
  vec_t b_star;   // m
  vec_t mu_star;  // n
  DerivStack derivs;
  index_t newton_iters = 0;
  bool converged = false;
  double inner_objective = 0.0;  // log p(y|mu*) - 0.5 b*' Sigma^{-1} b*
  double stationarity = 0.0;     // ||Z' d1 - Sigma^{-1} b*||_inf
};

struct NLLBundle {
  double nll = 0.0;
  vec_t grad_log_sigma2_re;      // d nll / d log sigma_k^2
  double grad_log_sigma2 = 0.0;  // d nll / d log sigma^2 (Gaussian only)
  vec_t grad_beta;
  Backend backend = Backend::Krylov;
  // diagnostics
  double logdet_m = 0.0;
  double slq_sd = 0.0;
  double mean_cg_iters = 0.0;
  index_t cg_unconverged = 0;
  bool zic_fallback = false;

  vec_t packed_gradient(bool gaussian) const;
};

// Newton mode finding for non-Gaussian likelihoods (Gaussian converges in
// one step and is allowed for cross-checks). Warm start via warm_b.
ModeState find_mode(const GroupedDesign& data, const ModelParams& params,
                    LikelihoodKind kind, Backend backend, const KrylovConfig& cfg,
                    double tol_mode = 1e-8, index_t max_newton = 100,
                    const vec_t* warm_b = nullptr);

// Gaussian negative log-marginal likelihood via the Woodbury identity and
// the matrix determinant lemma, gradients via exact traces (Cholesky) or
// stochastic trace estimation with SSOR control variates (Krylov).
NLLBundle gaussian_nll(const GroupedDesign& data, const ModelParams& params,
                       Backend backend, const KrylovConfig& cfg,
                       bool want_grad = true);

// Laplace-approximate negative log-marginal likelihood at a converged mode;
// gradients assembled as explicit + log-det + implicit (chain rule through
// the mode) parts.
NLLBundle laplace_nll(const GroupedDesign& data, const ModelParams& params,
                      LikelihoodKind kind, const ModeState& mode, Backend backend,
                      const KrylovConfig& cfg, bool want_grad = true);

// Dispatch on likelihood kind; finds/refreshes the mode for non-Gaussian
// likelihoods (mode_io carries the warm start across calls).
NLLBundle evaluate_nll(const GroupedDesign& data, const ModelParams& params,
                       LikelihoodKind kind, Backend backend, const KrylovConfig& cfg,
                       ModeState* mode_io = nullptr, bool want_grad = true);

}  // namespace gmmk

#endif  // GMMK_INFERENCE_HPP_
