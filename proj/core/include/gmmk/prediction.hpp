#ifndef GMMK_PREDICTION_HPP_
#define GMMK_PREDICTION_HPP_

#include <gmmk/inference.hpp>
#include <gmmk/types.hpp>

#include <string>
#include <vector>

namespace gmmk {

// Incidence of prediction rows into training effects (Z_po) and into new
// effects for unseen levels (Z_pp), one entry per factor per row.
struct PredictionSpec {
  den_mat_t X_p;
  index_t n_p = 0;
  index_t m = 0;   // training random effects
  index_t K = 0;
  // per factor and row: training column (global index) or -1 if unseen
  std::vector<std::vector<index_t>> train_col;
  // per factor and row: new-effect column (global new index) or -1 if seen
  std::vector<std::vector<index_t>> new_col;
  std::vector<index_t> new_levels_per_factor;  // m_p components
  std::vector<index_t> new_factor_offsets;

  index_t m_new() const { return new_factor_offsets.back(); }

  vec_t Zpo_mult(const vec_t& x_m) const;     // n_p result
  vec_t Zpo_mult_t(const vec_t& y_np) const;  // m result
  sp_mat_t Zpo_sparse() const;
  // diag(Z_pp Sigma_p Z_pp^T): per row, sum of sigma_k^2 over unseen factors
  vec_t Zpp_sigma_diag(const ModelParams& params) const;
  den_mat_t Zpp_sigma_Zpp(const ModelParams& params) const;  // n_p x n_p
  den_mat_t Zpo_sigma_Zpo(const ModelParams& params) const;  // n_p x n_p
};

// Maps prediction rows onto the training level dictionaries; labels unseen
// in training get fresh Z_pp columns in first-appearance order.
PredictionSpec build_prediction_spec(
    const REStructure& re, den_mat_t X_p,
    const std::vector<std::vector<std::string>>& labels_p);

struct PredictiveDist {
  vec_t omega;        // latent predictive means (incl. fixed effects)
  vec_t fixed_part;   // X_p beta
  vec_t var_latent;      // diag(Omega_p), clamped at zero
  vec_t var_latent_raw;  // the estimator before clamping (unbiasedness checks)
  den_mat_t cov;         // full Omega_p (Algorithms 2-3 only), 0x0 otherwise
  std::string method;
  index_t s_used = 0;
  index_t clamped = 0;  // negative variance estimates clamped to zero
  // response scale
  vec_t response_mean;
  vec_t response_var;  // Gaussian only

  vec_t latent_re_mean() const { return omega - fixed_part; }
};

// Everything prediction needs from a finished fit: the system at the
// estimated parameters and the posterior mode / mean.
struct LatentState {
  std::unique_ptr<NormalMatrix> M;
  std::unique_ptr<Preconditioner> P;
  vec_t W;       // working weights at the mode
  vec_t b_star;  // posterior mode (Gaussian: posterior mean)
  ModelParams params;
  LikelihoodKind kind = LikelihoodKind::GaussianIdentity;
  bool zic_fallback = false;
};

LatentState make_latent_state(const GroupedDesign& data, const ModelParams& params,
                              LikelihoodKind kind, Backend backend,
                              const KrylovConfig& cfg,
                              const ModeState* mode = nullptr);

// omega_p = F(X_p) + Z_po b*
vec_t predict_latent_mean(const PredictionSpec& spec, const LatentState& state);
// Gaussian-only alternative form omega_p = F(X_p) + Z_po Sigma Z' Psi^{-1} r
vec_t predict_latent_mean_psi_form(const PredictionSpec& spec,
                                   const GroupedDesign& data,
                                   const LatentState& state,
                                   const KrylovConfig& cfg);

// Algorithm 1: stochastic diagonal estimator with Rademacher probes and a
// per-coordinate control variate based on diag(Z_po P^{-1} Z_po^T).
PredictiveDist predict_var_stochastic_diag(const PredictionSpec& spec,
                                           const GroupedDesign& data,
                                           const LatentState& state, index_t s,
                                           const KrylovConfig& cfg,
                                           std::uint64_t seed,
                                           bool use_control_variate = true);

// Algorithm 2: simulation with z ~ N(0, M); full covariance or diagonal only.
PredictiveDist predict_cov_sim_normal(const PredictionSpec& spec,
                                      const GroupedDesign& data,
                                      const LatentState& state, index_t s,
                                      const KrylovConfig& cfg, std::uint64_t seed,
                                      bool diag_only = false);

// Algorithm 3: simulation with z ~ N(0, Psi) through the Woodbury identity
// (Gaussian-form Psi = Z Sigma Z^T + W^{-1}; requires W > 0).
PredictiveDist predict_cov_sim_psi(const PredictionSpec& spec,
                                   const GroupedDesign& data,
                                   const LatentState& state, index_t s,
                                   const KrylovConfig& cfg, std::uint64_t seed);

// Deterministic partial-Lanczos approximation of the predictive variances
// (known to be the least accurate option; kept for comparison).
PredictiveDist predict_var_lanczos(const PredictionSpec& spec,
                                   const GroupedDesign& data,
                                   const LatentState& state, index_t rank);

// Exact dense reference, diag(Omega_p) via Omega_p = Z_pp Sigma_p Z_pp^T +
// Z_po M^{-1} Z_po^T.
PredictiveDist chol_predict(const PredictionSpec& spec, const GroupedDesign& data,
                            const LatentState& state);
// Exact dense evaluation of the covariance in its two algebraic forms
den_mat_t chol_cov_m_form(const PredictionSpec& spec, const GroupedDesign& data,
                          const LatentState& state);
den_mat_t chol_cov_psi_form(const PredictionSpec& spec, const GroupedDesign& data,
                            const LatentState& state);

// Response-scale summaries: Gaussian adds the error variance; Bernoulli
// integrates the success probability by Gauss-Hermite quadrature.
void predict_response(PredictiveDist& dist, LikelihoodKind kind, double sigma2,
                      index_t n_points = 20);

// Gauss-Hermite nodes and weights (Golub-Welsch)
void gauss_hermite(index_t n, vec_t& nodes, vec_t& weights);

}  // namespace gmmk

#endif  // GMMK_PREDICTION_HPP_
