#include <gmmk/prediction.hpp>

#include <gmmk/cg.hpp>
#include <gmmk/lanczos.hpp>
#include <gmmk/oracle.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gmmk {

vec_t PredictionSpec::Zpo_mult(const vec_t& x_m) const {
  if (x_m.size() != m) {
    throw std::invalid_argument("Zpo_mult: dimension mismatch");
  }
  vec_t y = vec_t::Zero(n_p);
  for (index_t k = 0; k < K; ++k) {
    for (index_t i = 0; i < n_p; ++i) {
      const index_t c = train_col[k][i];
      if (c >= 0) y[i] += x_m[c];
    }
  }
  return y;
}

vec_t PredictionSpec::Zpo_mult_t(const vec_t& y_np) const {
  if (y_np.size() != n_p) {
    throw std::invalid_argument("Zpo_mult_t: dimension mismatch");
  }
  vec_t x = vec_t::Zero(m);
  for (index_t k = 0; k < K; ++k) {
    for (index_t i = 0; i < n_p; ++i) {
      const index_t c = train_col[k][i];
      if (c >= 0) x[c] += y_np[i];
    }
  }
  return x;
}

sp_mat_t PredictionSpec::Zpo_sparse() const {
  std::vector<Triplet> trips;
  for (index_t k = 0; k < K; ++k) {
    for (index_t i = 0; i < n_p; ++i) {
      if (train_col[k][i] >= 0) trips.emplace_back(i, train_col[k][i], 1.0);
    }
  }
  sp_mat_t Z(n_p, m);
  Z.setFromTriplets(trips.begin(), trips.end());
  return Z;
}

vec_t PredictionSpec::Zpp_sigma_diag(const ModelParams& params) const {
  vec_t d = vec_t::Zero(n_p);
  for (index_t k = 0; k < K; ++k) {
    for (index_t i = 0; i < n_p; ++i) {
      if (new_col[k][i] >= 0) d[i] += params.sigma2_re[k];
    }
  }
  return d;
}

den_mat_t PredictionSpec::Zpp_sigma_Zpp(const ModelParams& params) const {
  den_mat_t C = den_mat_t::Zero(n_p, n_p);
  for (index_t k = 0; k < K; ++k) {
    for (index_t i = 0; i < n_p; ++i) {
      if (new_col[k][i] < 0) continue;
      for (index_t j = 0; j < n_p; ++j) {
        if (new_col[k][j] == new_col[k][i]) C(i, j) += params.sigma2_re[k];
      }
    }
  }
  return C;
}

den_mat_t PredictionSpec::Zpo_sigma_Zpo(const ModelParams& params) const {
  den_mat_t C = den_mat_t::Zero(n_p, n_p);
  for (index_t k = 0; k < K; ++k) {
    for (index_t i = 0; i < n_p; ++i) {
      if (train_col[k][i] < 0) continue;
      for (index_t j = 0; j < n_p; ++j) {
        if (train_col[k][j] == train_col[k][i]) C(i, j) += params.sigma2_re[k];
      }
    }
  }
  return C;
}

PredictionSpec build_prediction_spec(
    const REStructure& re, den_mat_t X_p,
    const std::vector<std::vector<std::string>>& labels_p) {
  PredictionSpec spec;
  spec.K = re.num_factors;
  spec.m = re.total_levels();
  if (static_cast<index_t>(labels_p.size()) != spec.K) {
    throw std::invalid_argument("build_prediction_spec: factor count mismatch");
  }
  spec.n_p = static_cast<index_t>(labels_p[0].size());
  if (X_p.rows() != spec.n_p) {
    throw std::invalid_argument("build_prediction_spec: X_p rows != label rows");
  }
  spec.X_p = std::move(X_p);
  spec.train_col.assign(spec.K, std::vector<index_t>(spec.n_p, -1));
  spec.new_col.assign(spec.K, std::vector<index_t>(spec.n_p, -1));
  spec.new_levels_per_factor.assign(spec.K, 0);
  std::vector<std::unordered_map<std::string, index_t>> new_dict(spec.K);
  for (index_t k = 0; k < spec.K; ++k) {
    if (static_cast<index_t>(labels_p[k].size()) != spec.n_p) {
      throw std::invalid_argument("build_prediction_spec: ragged label columns");
    }
    for (index_t i = 0; i < spec.n_p; ++i) {
      auto it = re.label_to_index[k].find(labels_p[k][i]);
      if (it != re.label_to_index[k].end()) {
        spec.train_col[k][i] = re.factor_offsets[k] + it->second;
      } else {
        auto [nit, inserted] = new_dict[k].try_emplace(
            labels_p[k][i], static_cast<index_t>(new_dict[k].size()));
        spec.new_col[k][i] = nit->second;
      }
    }
    spec.new_levels_per_factor[k] = static_cast<index_t>(new_dict[k].size());
  }
  spec.new_factor_offsets.resize(spec.K + 1);
  spec.new_factor_offsets[0] = 0;
  for (index_t k = 0; k < spec.K; ++k) {
    spec.new_factor_offsets[k + 1] =
        spec.new_factor_offsets[k] + spec.new_levels_per_factor[k];
  }
  // globalize the per-factor new indices
  for (index_t k = 0; k < spec.K; ++k) {
    for (index_t i = 0; i < spec.n_p; ++i) {
      if (spec.new_col[k][i] >= 0) spec.new_col[k][i] += spec.new_factor_offsets[k];
    }
  }
  return spec;
}

LatentState make_latent_state(const GroupedDesign& data, const ModelParams& params,
                              LikelihoodKind kind, Backend backend,
                              const KrylovConfig& cfg, const ModeState* mode) {
  LatentState st;
  st.params = params;
  st.kind = kind;
  const vec_t sig_inv = params.sigma_inv_diag(data.re.levels_per_factor);
  if (kind == LikelihoodKind::GaussianIdentity) {
    st.W = vec_t::Constant(data.num_obs(), 1.0 / params.sigma2);
  } else {
    ModeState local;
    if (mode == nullptr || !mode->converged) {
      local = find_mode(data, params, kind, backend, cfg);
      mode = &local;
    }
    st.W = mode->derivs.W();
    st.b_star = mode->b_star;
  }
  st.M = std::make_unique<NormalMatrix>(
      assemble_normal_matrix(data.Z, st.W, sig_inv));
  try {
    st.P = build_preconditioner(cfg.precond, *st.M, data.Z, st.W, sig_inv,
                                cfg.lowrank_rank, cfg.probe_seed);
  } catch (const ZicBreakdownError&) {
    st.P = make_preconditioner(PrecondKind::SSOR, *st.M);
    st.zic_fallback = true;
  }
  if (kind == LikelihoodKind::GaussianIdentity) {
    const vec_t r = data.y - data.X * params.beta;
    const vec_t rhs = data.Z.mult_t(r) / params.sigma2;
    if (backend == Backend::Cholesky) {
      DenseOracle oracle(data, params, kind);
      oracle.factorize(st.W);
      st.b_star = oracle.solve(rhs);
    } else {
      st.b_star = pcg_solve(*st.M, *st.P, rhs, cfg.cg_tol_predict, cfg.cg_max_iter).u;
    }
  }
  return st;
}

vec_t predict_latent_mean(const PredictionSpec& spec, const LatentState& state) {
  return spec.X_p * state.params.beta + spec.Zpo_mult(state.b_star);
}

vec_t predict_latent_mean_psi_form(const PredictionSpec& spec,
                                   const GroupedDesign& data,
                                   const LatentState& state,
                                   const KrylovConfig& cfg) {
  if (state.kind != LikelihoodKind::GaussianIdentity) {
    throw std::invalid_argument("psi-form mean needs a Gaussian likelihood");
  }
  const double s2 = state.params.sigma2;
  const vec_t r = data.y - data.X * state.params.beta;
  // Psi^{-1} r = r/s2 - Z M^{-1} Z^T r / s2^2
  const vec_t a =
      pcg_solve(*state.M, *state.P, data.Z.mult_t(r), cfg.cg_tol_predict,
                cfg.cg_max_iter).u;
  const vec_t q = r / s2 - data.Z.mult(a) / (s2 * s2);
  const vec_t sigma_diag =
      state.params.sigma_inv_diag(data.re.levels_per_factor).cwiseInverse();
  return spec.X_p * state.params.beta +
         spec.Zpo_mult(sigma_diag.cwiseProduct(data.Z.mult_t(q)));
}

namespace {

void clamp_variances(PredictiveDist& dist) {
  dist.var_latent_raw = dist.var_latent;
  for (index_t i = 0; i < dist.var_latent.size(); ++i) {
    if (dist.var_latent[i] < 0.0) {
      dist.var_latent[i] = 0.0;
      ++dist.clamped;
    }
  }
}

}  // namespace

PredictiveDist predict_var_stochastic_diag(const PredictionSpec& spec,
                                           const GroupedDesign& /*data*/,
                                           const LatentState& state, index_t s,
                                           const KrylovConfig& cfg,
                                           std::uint64_t seed,
                                           bool use_control_variate) {
  if (s < 2) {
    throw std::invalid_argument("predict_var_stochastic_diag: s must be >= 2");
  }
  const index_t n_p = spec.n_p;
  PredictiveDist dist;
  dist.method = "stochastic_diag";
  dist.s_used = s;
  dist.fixed_part = spec.X_p * state.params.beta;
  dist.omega = predict_latent_mean(spec, state);

  // deterministic control-variate quantities from P^{-1/2} Z_po^T
  vec_t diag_p(n_p);          // diag(Z_po P^{-1} Z_po^T)
  den_mat_t B;                // m x n_p, P^{-1/2} Z_po^T when available
  const bool have_factor = state.P->has_inv_sqrt();
  if (have_factor) {
    B = state.P->inv_sqrt_times(den_mat_t(spec.Zpo_sparse().transpose()));
    diag_p = B.colwise().squaredNorm();
  } else {
    den_mat_t Zpo_t(spec.Zpo_sparse().transpose());
    for (index_t i = 0; i < n_p; ++i) {
      diag_p[i] = state.P->inv_quad(Zpo_t.col(i));
    }
  }

  vec_t sh = vec_t::Zero(n_p), sr = vec_t::Zero(n_p);
  vec_t shr = vec_t::Zero(n_p), srr = vec_t::Zero(n_p);
  std::vector<vec_t> hs(s), rs(s);
#pragma omp parallel for schedule(dynamic)
  for (index_t i = 0; i < s; ++i) {
    ProbeSet probe_src(s, ProbeKind::Rademacher, seed);
    const vec_t z1 = materialize_probe(probe_src, i, n_p);
    const vec_t zpo_t_z1 = spec.Zpo_mult_t(z1);
    const vec_t u = pcg_solve(*state.M, *state.P, zpo_t_z1, cfg.cg_tol_predict,
                              cfg.cg_max_iter).u;
    const vec_t z2 = spec.Zpo_mult(u);
    vec_t z3;
    if (have_factor) {
      z3 = B.transpose() * (B * z1);
    } else {
      z3 = spec.Zpo_mult(state.P->solve(zpo_t_z1));
    }
    hs[i] = z1.cwiseProduct(z2);
    rs[i] = z1.cwiseProduct(z3);
  }
  for (index_t i = 0; i < s; ++i) {  // fixed-order reduction
    sh += hs[i];
    sr += rs[i];
    shr += hs[i].cwiseProduct(rs[i]);
    srr += rs[i].cwiseProduct(rs[i]);
  }

  const double sd = static_cast<double>(s);
  vec_t diag_est(n_p);
  for (index_t j = 0; j < n_p; ++j) {
    const double hm = sh[j] / sd, rm = sr[j] / sd;
    const double var = srr[j] - sd * rm * rm;
    const double cov = shr[j] - sd * hm * rm;
    const double c =
        (use_control_variate && var > 1e-300) ? cov / var : 0.0;
    diag_est[j] = c * diag_p[j] + hm - c * rm;
  }
  dist.var_latent = spec.Zpp_sigma_diag(state.params) + diag_est;
  clamp_variances(dist);
  return dist;
}

PredictiveDist predict_cov_sim_normal(const PredictionSpec& spec,
                                      const GroupedDesign& data,
                                      const LatentState& state, index_t s,
                                      const KrylovConfig& cfg, std::uint64_t seed,
                                      bool diag_only) {
  const index_t n_p = spec.n_p;
  const index_t n = data.num_obs();
  const index_t m = spec.m;
  PredictiveDist dist;
  dist.method = "sim_normal";
  dist.s_used = s;
  dist.fixed_part = spec.X_p * state.params.beta;
  dist.omega = predict_latent_mean(spec, state);

  const vec_t sig_inv_sqrt =
      state.params.sigma_inv_diag(data.re.levels_per_factor).cwiseSqrt();
  const vec_t W_sqrt = state.W.cwiseSqrt();

  std::vector<vec_t> z4s(s);
#pragma omp parallel for schedule(dynamic)
  for (index_t i = 0; i < s; ++i) {
    RNG rng = make_rng(seed, static_cast<std::uint64_t>(i));
    std::normal_distribution<double> ndist;
    vec_t z1(m), z2(n);
    for (auto& v : z1) v = ndist(rng);
    for (auto& v : z2) v = ndist(rng);
    // z3 ~ N(0, Sigma^{-1} + Z^T W Z)
    const vec_t z3 = sig_inv_sqrt.cwiseProduct(z1) +
                     data.Z.mult_t(W_sqrt.cwiseProduct(z2));
    const vec_t u = pcg_solve(*state.M, *state.P, z3, cfg.cg_tol_predict,
                              cfg.cg_max_iter).u;
    z4s[i] = spec.Zpo_mult(u);
  }

  if (diag_only) {
    vec_t acc = vec_t::Zero(n_p);
    for (index_t i = 0; i < s; ++i) acc += z4s[i].cwiseProduct(z4s[i]);
    dist.var_latent = spec.Zpp_sigma_diag(state.params) + acc / s;
  } else {
    den_mat_t cov = spec.Zpp_sigma_Zpp(state.params);
    for (index_t i = 0; i < s; ++i) {
      cov += z4s[i] * z4s[i].transpose() / static_cast<double>(s);
    }
    dist.cov = cov;
    dist.var_latent = cov.diagonal();
  }
  clamp_variances(dist);
  return dist;
}

PredictiveDist predict_cov_sim_psi(const PredictionSpec& spec,
                                   const GroupedDesign& data,
                                   const LatentState& state, index_t s,
                                   const KrylovConfig& cfg, std::uint64_t seed) {
  const index_t n = data.num_obs();
  const index_t m = spec.m;
  if ((state.W.array() <= 0.0).any()) {
    throw std::invalid_argument(
        "predict_cov_sim_psi: W must be positive (use the N(0,M) variant)");
  }
  PredictiveDist dist;
  dist.method = "sim_psi";
  dist.s_used = s;
  dist.fixed_part = spec.X_p * state.params.beta;
  dist.omega = predict_latent_mean(spec, state);

  const vec_t sigma_diag =
      state.params.sigma_inv_diag(data.re.levels_per_factor).cwiseInverse();
  const vec_t sigma_sqrt = sigma_diag.cwiseSqrt();
  const vec_t W_inv_sqrt = state.W.cwiseSqrt().cwiseInverse();

  std::vector<vec_t> z4s(s);
#pragma omp parallel for schedule(dynamic)
  for (index_t i = 0; i < s; ++i) {
    RNG rng = make_rng(seed, static_cast<std::uint64_t>(i));
    std::normal_distribution<double> ndist;
    vec_t z1(m), z2(n);
    for (auto& v : z1) v = ndist(rng);
    for (auto& v : z2) v = ndist(rng);
    // z3 ~ N(0, Psi) with Psi = Z Sigma Z^T + W^{-1}
    const vec_t z3 = data.Z.mult(sigma_sqrt.cwiseProduct(z1)) +
                     W_inv_sqrt.cwiseProduct(z2);
    // Psi^{-1} z3 = W z3 - W Z M^{-1} Z^T W z3
    const vec_t Wz = state.W.cwiseProduct(z3);
    const vec_t u = pcg_solve(*state.M, *state.P, data.Z.mult_t(Wz),
                              cfg.cg_tol_predict, cfg.cg_max_iter).u;
    const vec_t psi_inv_z3 = Wz - state.W.cwiseProduct(data.Z.mult(u));
    z4s[i] = spec.Zpo_mult(sigma_diag.cwiseProduct(data.Z.mult_t(psi_inv_z3)));
  }

  den_mat_t cov = spec.Zpo_sigma_Zpo(state.params) +
                  spec.Zpp_sigma_Zpp(state.params);
  for (index_t i = 0; i < s; ++i) {
    cov -= z4s[i] * z4s[i].transpose() / static_cast<double>(s);
  }
  dist.cov = cov;
  dist.var_latent = cov.diagonal();
  clamp_variances(dist);
  return dist;
}

PredictiveDist predict_var_lanczos(const PredictionSpec& spec,
                                   const GroupedDesign& data,
                                   const LatentState& state, index_t rank) {
  if (rank < 1) {
    throw std::invalid_argument("predict_var_lanczos: rank must be >= 1");
  }
  const index_t n_p = spec.n_p;
  PredictiveDist dist;
  dist.method = "lanczos";
  dist.s_used = rank;
  dist.fixed_part = spec.X_p * state.params.beta;
  dist.omega = predict_latent_mean(spec, state);

  const vec_t sigma_diag =
      state.params.sigma_inv_diag(data.re.levels_per_factor).cwiseInverse();

  // C = Z^T W Z Sigma Z_po^T, column i = Z^T W Z (Sigma z_po_i)
  den_mat_t C(spec.m, n_p);
  vec_t diag_zo = vec_t::Zero(n_p);  // diag(Z_po Sigma Z_po^T)
  den_mat_t Zpo_t(spec.Zpo_sparse().transpose());
  for (index_t i = 0; i < n_p; ++i) {
    const vec_t sz = sigma_diag.cwiseProduct(Zpo_t.col(i));
    C.col(i) = data.Z.mult_t(state.W.cwiseProduct(data.Z.mult(sz)));
    diag_zo[i] = Zpo_t.col(i).dot(sz);
  }

  // start vector: normalized column average of C
  vec_t q0 = C.rowwise().mean();
  auto op = [&](const vec_t& x) { return state.M->matvec(x); };
  LanczosResult lr = lanczos_partial(op, q0, rank);

  // tridiagonal solve T y = w per column
  Eigen::SelfAdjointEigenSolver<den_mat_t> es;
  es.computeFromTridiagonal(lr.alpha, lr.beta);
  const den_mat_t V = es.eigenvectors();
  const vec_t evals = es.eigenvalues();

  vec_t term3(n_p), term4(n_p);
  for (index_t i = 0; i < n_p; ++i) {
    const vec_t sz = sigma_diag.cwiseProduct(Zpo_t.col(i));
    term3[i] = sz.dot(C.col(i));
    const vec_t w = lr.Q.transpose() * C.col(i);
    const vec_t wv = V.transpose() * w;
    term4[i] = (wv.array().square() / evals.array()).sum();
  }

  dist.var_latent = diag_zo + spec.Zpp_sigma_diag(state.params) - term3 + term4;
  clamp_variances(dist);
  return dist;
}

PredictiveDist chol_predict(const PredictionSpec& spec, const GroupedDesign& /*data*/,
                            const LatentState& state) {
  PredictiveDist dist;
  dist.method = "cholesky";
  dist.fixed_part = spec.X_p * state.params.beta;
  dist.omega = predict_latent_mean(spec, state);
  den_mat_t Md = state.M->M.to_dense();
  Eigen::LLT<den_mat_t> llt(Md);
  den_mat_t Zpo_t(spec.Zpo_sparse().transpose());
  den_mat_t S = llt.solve(Zpo_t);
  dist.var_latent = spec.Zpp_sigma_diag(state.params);
  for (index_t i = 0; i < spec.n_p; ++i) {
    dist.var_latent[i] += Zpo_t.col(i).dot(S.col(i));
  }
  return dist;
}

den_mat_t chol_cov_m_form(const PredictionSpec& spec, const GroupedDesign& /*data*/,
                          const LatentState& state) {
  den_mat_t Md = state.M->M.to_dense();
  Eigen::LLT<den_mat_t> llt(Md);
  den_mat_t Zpo_t(spec.Zpo_sparse().transpose());
  return spec.Zpp_sigma_Zpp(state.params) + Zpo_t.transpose() * llt.solve(Zpo_t);
}

den_mat_t chol_cov_psi_form(const PredictionSpec& spec, const GroupedDesign& data,
                            const LatentState& state) {
  const vec_t sigma_diag =
      state.params.sigma_inv_diag(data.re.levels_per_factor).cwiseInverse();
  den_mat_t Zd(data.Z.to_sparse());
  den_mat_t Psi = Zd * sigma_diag.asDiagonal() * Zd.transpose();
  Psi += den_mat_t(state.W.cwiseInverse().asDiagonal());
  Eigen::LLT<den_mat_t> llt(Psi);
  den_mat_t Zpo(spec.Zpo_sparse());
  den_mat_t ZSZpo = Zd * (sigma_diag.asDiagonal() * den_mat_t(Zpo.transpose()));
  return spec.Zpo_sigma_Zpo(state.params) + spec.Zpp_sigma_Zpp(state.params) -
         ZSZpo.transpose() * llt.solve(ZSZpo);
}

void gauss_hermite(index_t n, vec_t& nodes, vec_t& weights) {
  // Golub-Welsch on the Hermite Jacobi matrix: offdiag_j = sqrt(j/2)
  vec_t alpha = vec_t::Zero(n);
  vec_t beta(n - 1);
  for (index_t j = 1; j < n; ++j) beta[j - 1] = std::sqrt(j / 2.0);
  Eigen::SelfAdjointEigenSolver<den_mat_t> es;
  es.computeFromTridiagonal(alpha, beta);
  nodes = es.eigenvalues();
  weights.resize(n);
  const double sqrt_pi = std::sqrt(std::numbers::pi);
  for (index_t i = 0; i < n; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    weights[i] = sqrt_pi * v0 * v0;
  }
}

void predict_response(PredictiveDist& dist, LikelihoodKind kind, double sigma2,
                      index_t n_points) {
  const index_t n_p = dist.omega.size();
  if (kind == LikelihoodKind::GaussianIdentity) {
    dist.response_mean = dist.omega;
    dist.response_var = dist.var_latent.array() + sigma2;
    return;
  }
  // P(y = 1) = int sigmoid(x) N(x; omega, var) dx by Gauss-Hermite
  vec_t nodes, weights;
  gauss_hermite(n_points, nodes, weights);
  const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
  dist.response_mean.resize(n_p);
  for (index_t i = 0; i < n_p; ++i) {
    const double scale = std::sqrt(2.0 * std::max(dist.var_latent[i], 0.0));
    double p = 0.0;
    for (index_t q = 0; q < nodes.size(); ++q) {
      p += weights[q] * sigmoid(dist.omega[i] + scale * nodes[q]);
    }
    dist.response_mean[i] = p * inv_sqrt_pi;
  }
  dist.response_var = dist.response_mean.array() * (1.0 - dist.response_mean.array());
}

}  // namespace gmmk
