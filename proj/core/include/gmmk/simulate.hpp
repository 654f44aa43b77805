#ifndef GMMK_SIMULATE_HPP_
#define GMMK_SIMULATE_HPP_

#include <gmmk/grouped_data.hpp>
#include <gmmk/likelihood.hpp>
#include <gmmk/model_params.hpp>
#include <gmmk/prediction.hpp>
#include <gmmk/types.hpp>

#include <string>
#include <vector>

namespace gmmk {

enum class DesignKind { BalancedRandom, Biregular, Unbalanced };

std::string design_kind_name(DesignKind kind);
DesignKind parse_design_kind(const std::string& name);

struct SimConfig {
  index_t n = 1000;
  std::vector<index_t> m_k = {100, 100};
  vec_t sigma2_re;          // defaults to 0.25 per factor
  double sigma2 = 0.25;     // Gaussian error variance
  LikelihoodKind likelihood = LikelihoodKind::GaussianIdentity;
  index_t n_covariates = 5; // plus intercept
  vec_t beta;               // defaults to (0, 1, ..., 1)
  std::uint64_t seed = 1;
  DesignKind design = DesignKind::BalancedRandom;
  index_t n_test = 0;       // rows held out into a test set

  void fill_defaults();
};

struct SimTruth {
  vec_t b;            // every simulated random effect, global level indexing
  vec_t beta;
  vec_t sigma2_re;
  double sigma2 = 0.0;
  vec_t test_latent_re;  // Z_po b + Z_pp b_p per test row
};

struct SimData {
  GroupedDesign train;
  vec_t y_test;
  den_mat_t X_test;
  std::vector<std::vector<std::string>> test_labels;
  SimTruth truth;
};

// Crossed random effects, linear fixed effects with the covariate variance
// chosen so var(X beta) equals the total random-effect variance, Gaussian or
// Bernoulli responses; deterministic under cfg.seed.
SimData simulate_dataset(const SimConfig& cfg);

// (RMSE, log score) of latent random-effect predictions against the truth
std::pair<double, double> evaluate_predictions(const vec_t& truth_re,
                                               const PredictiveDist& dist);

}  // namespace gmmk

#endif  // GMMK_SIMULATE_HPP_
