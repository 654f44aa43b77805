#include <gmmk/simulate.hpp>

#include <gmmk/stats.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace gmmk {

std::string design_kind_name(DesignKind kind) {
  switch (kind) {
    case DesignKind::BalancedRandom: return "balanced";
    case DesignKind::Biregular: return "biregular";
    case DesignKind::Unbalanced: return "unbalanced";
  }
  return "unknown";
}

DesignKind parse_design_kind(const std::string& name) {
  if (name == "balanced") return DesignKind::BalancedRandom;
  if (name == "biregular") return DesignKind::Biregular;
  if (name == "unbalanced") return DesignKind::Unbalanced;
  throw std::invalid_argument("unknown design kind: " + name);
}

void SimConfig::fill_defaults() {
  const index_t K = static_cast<index_t>(m_k.size());
  if (sigma2_re.size() == 0) sigma2_re = vec_t::Constant(K, 0.25);
  if (beta.size() == 0) {
    beta = vec_t::Ones(n_covariates + 1);
    beta[0] = 0.0;
  }
}

namespace {

// per-factor level draws over the full n_total rows
std::vector<std::vector<index_t>> draw_levels(const SimConfig& cfg, index_t n_total,
                                              RNG& rng) {
  const index_t K = static_cast<index_t>(cfg.m_k.size());
  std::vector<std::vector<index_t>> levels(K);
  switch (cfg.design) {
    case DesignKind::BalancedRandom: {
      for (index_t k = 0; k < K; ++k) {
        if (n_total % cfg.m_k[k] != 0) {
          throw std::invalid_argument(
              "simulate_dataset: balanced design needs m_k | n");
        }
        const index_t d = n_total / cfg.m_k[k];
        levels[k].reserve(n_total);
        for (index_t j = 0; j < cfg.m_k[k]; ++j) {
          for (index_t r = 0; r < d; ++r) levels[k].push_back(j);
        }
        std::shuffle(levels[k].begin(), levels[k].end(), rng);
      }
      break;
    }
    case DesignKind::Biregular: {
      if (K != 2) {
        throw std::invalid_argument("biregular design needs exactly two factors");
      }
      if (n_total % cfg.m_k[0] != 0 || n_total % cfg.m_k[1] != 0) {
        throw std::invalid_argument("biregular design needs m_k | n");
      }
      // configuration model: pair the half-edge stubs of both factors, then
      // repair duplicate pairs by edge swaps so levels co-occur at most once
      for (index_t k = 0; k < 2; ++k) {
        const index_t d = n_total / cfg.m_k[k];
        levels[k].reserve(n_total);
        for (index_t j = 0; j < cfg.m_k[k]; ++j) {
          for (index_t r = 0; r < d; ++r) levels[k].push_back(j);
        }
        std::shuffle(levels[k].begin(), levels[k].end(), rng);
      }
      auto key = [&](index_t i) {
        return levels[0][i] * static_cast<std::int64_t>(cfg.m_k[1]) + levels[1][i];
      };
      std::uniform_int_distribution<index_t> pick(0, n_total - 1);
      for (int rounds = 0; rounds < 10000; ++rounds) {
        std::multiset<std::int64_t> seen;
        std::vector<index_t> dups;
        for (index_t i = 0; i < n_total; ++i) seen.insert(key(i));
        for (index_t i = 0; i < n_total; ++i) {
          if (seen.count(key(i)) > 1) dups.push_back(i);
        }
        if (dups.empty()) break;
        for (index_t i : dups) {
          // swap the factor-2 endpoints of a duplicate edge and a random edge
          const index_t j = pick(rng);
          std::swap(levels[1][i], levels[1][j]);
        }
      }
      break;
    }
    case DesignKind::Unbalanced: {
      for (index_t k = 0; k < K; ++k) {
        std::uniform_int_distribution<index_t> pick(0, cfg.m_k[k] - 1);
        levels[k].resize(n_total);
        for (index_t i = 0; i < n_total; ++i) levels[k][i] = pick(rng);
      }
      break;
    }
  }
  return levels;
}

}  // namespace

SimData simulate_dataset(const SimConfig& cfg_in) {
  SimConfig cfg = cfg_in;
  cfg.fill_defaults();
  const index_t K = static_cast<index_t>(cfg.m_k.size());
  if (K < 1 || cfg.n < 1) {
    throw std::invalid_argument("simulate_dataset: need n >= 1 and K >= 1");
  }
  if (cfg.sigma2_re.size() != K) {
    throw std::invalid_argument("simulate_dataset: sigma2_re size != K");
  }
  const index_t n_total = cfg.n + cfg.n_test;
  RNG rng = make_rng(cfg.seed);

  auto levels = draw_levels(cfg, n_total, rng);

  const index_t m_total = std::accumulate(cfg.m_k.begin(), cfg.m_k.end(), index_t{0});
  std::vector<index_t> offsets(K + 1, 0);
  for (index_t k = 0; k < K; ++k) offsets[k + 1] = offsets[k] + cfg.m_k[k];

  std::normal_distribution<double> ndist;
  vec_t b(m_total);
  for (index_t k = 0; k < K; ++k) {
    const double sd = std::sqrt(cfg.sigma2_re[k]);
    for (index_t j = 0; j < cfg.m_k[k]; ++j) b[offsets[k] + j] = sd * ndist(rng);
  }

  // covariates scaled so var(X beta) matches the total random-effect variance
  const index_t p = cfg.beta.size();
  const double slope_sq = cfg.beta.tail(p - 1).squaredNorm();
  const double x_sd =
      slope_sq > 0.0 ? std::sqrt(cfg.sigma2_re.sum() / slope_sq) : 1.0;
  den_mat_t X(n_total, p);
  X.col(0).setOnes();
  for (index_t i = 0; i < n_total; ++i) {
    for (index_t j = 1; j < p; ++j) X(i, j) = x_sd * ndist(rng);
  }

  vec_t eta(n_total);
  for (index_t i = 0; i < n_total; ++i) {
    double re = 0.0;
    for (index_t k = 0; k < K; ++k) re += b[offsets[k] + levels[k][i]];
    eta[i] = X.row(i) * cfg.beta + re;
  }
  vec_t y(n_total);
  if (cfg.likelihood == LikelihoodKind::GaussianIdentity) {
    const double sd = std::sqrt(cfg.sigma2);
    for (index_t i = 0; i < n_total; ++i) y[i] = eta[i] + sd * ndist(rng);
  } else {
    std::uniform_real_distribution<double> unif;
    for (index_t i = 0; i < n_total; ++i) {
      y[i] = unif(rng) < sigmoid(eta[i]) ? 1.0 : 0.0;
    }
  }

  // uniformly random train/test split
  std::vector<index_t> order(n_total);
  std::iota(order.begin(), order.end(), index_t{0});
  if (cfg.n_test > 0) std::shuffle(order.begin(), order.end(), rng);

  SimData out;
  out.truth.b = b;
  out.truth.beta = cfg.beta;
  out.truth.sigma2_re = cfg.sigma2_re;
  out.truth.sigma2 = cfg.sigma2;

  std::vector<std::vector<std::string>> train_labels(K), test_labels(K);
  vec_t y_train(cfg.n), y_test(cfg.n_test);
  den_mat_t X_train(cfg.n, p), X_test(cfg.n_test, p);
  out.truth.test_latent_re.resize(cfg.n_test);
  for (index_t r = 0; r < n_total; ++r) {
    const index_t i = order[r];
    if (r < cfg.n) {
      y_train[r] = y[i];
      X_train.row(r) = X.row(i);
      for (index_t k = 0; k < K; ++k) {
        train_labels[k].push_back(std::to_string(levels[k][i]));
      }
    } else {
      const index_t rt = r - cfg.n;
      y_test[rt] = y[i];
      X_test.row(rt) = X.row(i);
      double re = 0.0;
      for (index_t k = 0; k < K; ++k) {
        test_labels[k].push_back(std::to_string(levels[k][i]));
        re += b[offsets[k] + levels[k][i]];
      }
      out.truth.test_latent_re[rt] = re;
    }
  }
  out.train = make_grouped_design(std::move(y_train), std::move(X_train),
                                  std::move(train_labels));
  out.y_test = std::move(y_test);
  out.X_test = std::move(X_test);
  out.test_labels = std::move(test_labels);
  return out;
}

std::pair<double, double> evaluate_predictions(const vec_t& truth_re,
                                               const PredictiveDist& dist) {
  const index_t n_p = truth_re.size();
  if (dist.omega.size() != n_p) {
    throw std::invalid_argument("evaluate_predictions: size mismatch");
  }
  const vec_t mean_re = dist.latent_re_mean();
  const double rmse = std::sqrt((mean_re - truth_re).squaredNorm() / n_p);
  double ls = 0.0;
  for (index_t i = 0; i < n_p; ++i) {
    if (dist.var_latent[i] <= 0.0) {
      ls = std::numeric_limits<double>::infinity();
      break;
    }
    ls -= normal_log_pdf(truth_re[i], mean_re[i], dist.var_latent[i]);
  }
  return {rmse, ls / n_p};
}

}  // namespace gmmk
