#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <gmmk/optimizer.hpp>
#include <gmmk/simulate.hpp>
#include <gmmk/spectral.hpp>

#include "helpers.hpp"

#include <numbers>

using namespace gmmk;

TEST_CASE("balanced design gives every level exactly n/m_k occurrences") {
  SimConfig cfg;
  cfg.n = 1000;
  cfg.m_k = {100, 100};
  cfg.seed = 5;
  SimData sim = simulate_dataset(cfg);
  vec_t counts = sim.train.Z.column_counts();
  CHECK(counts.minCoeff() == 10.0);
  CHECK(counts.maxCoeff() == 10.0);
}

TEST_CASE("fixed-effect variance matches the total random-effect variance") {
  SimConfig cfg;
  cfg.n = 100000;
  cfg.m_k = {200, 200};
  cfg.seed = 7;
  SimData sim = simulate_dataset(cfg);
  const vec_t xb = sim.train.X * sim.truth.beta;
  const double var_xb = (xb.array() - xb.mean()).square().sum() / (xb.size() - 1);
  CHECK(var_xb == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("empirical variance of the random-effect part approaches the target") {
  SimConfig cfg;
  cfg.n = 100000;
  cfg.m_k = {250, 250};
  cfg.seed = 11;
  SimData sim = simulate_dataset(cfg);
  // reconstruct Z b from the truth
  vec_t zb(sim.train.num_obs());
  for (index_t i = 0; i < sim.train.num_obs(); ++i) {
    double re = 0.0;
    for (index_t k = 0; k < 2; ++k) {
      const index_t level = std::stoll(sim.train.group_labels[k][i]);
      re += sim.truth.b[k * 250 + level];
    }
    zb[i] = re;
  }
  const double var_zb = (zb.array() - zb.mean()).square().sum() / (zb.size() - 1);
  CHECK(std::fabs(var_zb - 0.5) <= 0.05 * 0.5);
}

TEST_CASE("simulation is deterministic under the seed") {
  SimConfig cfg;
  cfg.n = 500;
  cfg.n_test = 100;
  cfg.m_k = {20, 20};
  cfg.seed = 13;
  cfg.likelihood = LikelihoodKind::BernoulliLogit;
  SimData a = simulate_dataset(cfg);
  SimData b = simulate_dataset(cfg);
  CHECK((a.train.y - b.train.y).norm() == 0.0);
  CHECK((a.X_test - b.X_test).norm() == 0.0);
  CHECK(a.train.group_labels == b.train.group_labels);
  CHECK((a.truth.b - b.truth.b).norm() == 0.0);
  cfg.seed = 14;
  SimData c = simulate_dataset(cfg);
  CHECK((a.train.y - c.train.y).norm() > 0.0);
}

TEST_CASE("biregular designs are balanced with no repeated pairs") {
  SimConfig cfg;
  cfg.n = 2000;
  cfg.m_k = {100, 100};
  cfg.design = DesignKind::Biregular;
  cfg.seed = 17;
  SimData sim = simulate_dataset(cfg);
  vec_t counts = sim.train.Z.column_counts();
  CHECK(counts.minCoeff() == 20.0);
  CHECK(counts.maxCoeff() == 20.0);
  DesignInfo info = analyze_design(sim.train.Z, true);
  CHECK(info.cooccur_at_most_once);
}

TEST_CASE("infeasible balanced constraints are rejected") {
  SimConfig cfg;
  cfg.n = 1001;
  cfg.m_k = {100, 100};
  CHECK_THROWS_AS(simulate_dataset(cfg), std::invalid_argument);
}

TEST_CASE("zero variance components leave only fixed effects plus noise") {
  SimConfig cfg;
  cfg.n = 4000;
  cfg.m_k = {40, 40};
  cfg.sigma2_re = vec_t::Zero(2);
  cfg.seed = 19;
  SimData sim = simulate_dataset(cfg);
  CHECK(sim.truth.b.cwiseAbs().maxCoeff() == 0.0);

  // fitting recovers variance components near zero and an iid-like nll
  KrylovConfig kcfg;
  OptimizerConfig ocfg;
  ocfg.compute_std_errors = false;
  FitResult fit = gmmk::fit(sim.train, LikelihoodKind::GaussianIdentity,
                            default_init(sim.train, LikelihoodKind::GaussianIdentity),
                            Backend::Cholesky, kcfg, ocfg);
  CHECK(fit.params.sigma2_re.maxCoeff() <= 0.01);
  const vec_t r = sim.train.y - sim.train.X * fit.params.beta;
  const double s2_hat = r.squaredNorm() / r.size();
  const double iid_nll = 0.5 * r.size() * std::log(2.0 * std::numbers::pi * s2_hat) +
                         0.5 * r.size();
  CHECK(std::fabs(fit.final_nll() - iid_nll) <= 0.05 * std::fabs(iid_nll));
}

TEST_CASE("perfect prediction with unit variance scores half log two pi") {
  PredictiveDist dist;
  dist.omega = vec_t::Constant(4, 1.3);
  dist.fixed_part = vec_t::Zero(4);
  dist.var_latent = vec_t::Ones(4);
  vec_t truth = vec_t::Constant(4, 1.3);
  auto [rmse, ls] = evaluate_predictions(truth, dist);
  CHECK(rmse == doctest::Approx(0.0));
  CHECK(ls == doctest::Approx(0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-12));
}

TEST_CASE("zero predictive variance with a mismatch gives an infinite log score") {
  PredictiveDist dist;
  dist.omega = vec_t::Zero(2);
  dist.fixed_part = vec_t::Zero(2);
  dist.var_latent = vec_t::Zero(2);
  vec_t truth = vec_t::Constant(2, 0.5);
  auto [rmse, ls] = evaluate_predictions(truth, dist);
  CHECK(std::isinf(ls));
  CHECK(rmse == doctest::Approx(0.5));
}

TEST_CASE("unbalanced design draws levels uniformly") {
  SimConfig cfg;
  cfg.n = 30000;
  cfg.m_k = {100, 50};  // m_2 = m_1 / 2
  cfg.design = DesignKind::Unbalanced;
  cfg.seed = 23;
  SimData sim = simulate_dataset(cfg);
  vec_t counts = sim.train.Z.column_counts();
  const auto c1 = counts.head(100);
  CHECK(c1.minCoeff() > 0.5 * 300);
  CHECK(c1.maxCoeff() < 2.0 * 300);
}
