#include <gmmk/inference.hpp>

#include <gmmk/cg.hpp>
#include <gmmk/oracle.hpp>
#include <gmmk/ste.hpp>

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <utility>

namespace gmmk {

std::string backend_name(Backend b) {
  return b == Backend::Krylov ? "krylov" : "cholesky";
}

Backend parse_backend(const std::string& name) {
  if (name == "krylov") return Backend::Krylov;
  if (name == "cholesky") return Backend::Cholesky;
  throw std::invalid_argument("unknown backend: " + name);
}

vec_t NLLBundle::packed_gradient(bool gaussian) const {
  const index_t K = grad_log_sigma2_re.size();
  const index_t p = grad_beta.size();
  vec_t g(K + (gaussian ? 1 : 0) + p);
  g.head(K) = grad_log_sigma2_re;
  if (gaussian) g[K] = grad_log_sigma2;
  g.tail(p) = grad_beta;
  return g;
}

namespace {

Likelihood make_likelihood(LikelihoodKind kind, const ModelParams& params) {
  return kind == LikelihoodKind::GaussianIdentity ? Likelihood::gaussian(params.sigma2)
                                                  : Likelihood::bernoulli_logit();
}

// the preconditioner borrows the normal matrix, so the matrix lives behind
// a stable heap address
struct System {
  std::unique_ptr<NormalMatrix> nm;
  std::unique_ptr<Preconditioner> P;
  bool zic_fallback = false;
};

System build_system(const IncidenceMatrix& Z, const vec_t& W, const vec_t& sig_inv,
                    const KrylovConfig& cfg) {
  System sys;
  sys.nm = std::make_unique<NormalMatrix>(assemble_normal_matrix(Z, W, sig_inv));
  try {
    sys.P = build_preconditioner(cfg.precond, *sys.nm, Z, W, sig_inv,
                                 cfg.lowrank_rank, cfg.probe_seed);
  } catch (const ZicBreakdownError&) {
    sys.P = make_preconditioner(PrecondKind::SSOR, *sys.nm);
    sys.zic_fallback = true;
  }
  return sys;
}

// shared trace/solve interface over the two backends
struct GradOps {
  std::function<double(const vec_t&)> trace_diag;
  std::function<double(const vec_t&)> trace_obs;
  std::function<vec_t(const vec_t&)> mode_grad;  // d3 -> d logdet(M)/d mu*
  std::function<vec_t(const vec_t&)> solve;
};

}  // namespace

ModeState find_mode(const GroupedDesign& data, const ModelParams& params,
                    LikelihoodKind kind, Backend backend, const KrylovConfig& cfg,
                    double tol_mode, index_t max_newton, const vec_t* warm_b) {
  params.validate();
  const Likelihood lik = make_likelihood(kind, params);
  lik.check_response(data.y);
  const IncidenceMatrix& Z = data.Z;
  const index_t m = Z.cols();
  const vec_t sig_inv = params.sigma_inv_diag(data.re.levels_per_factor);
  const vec_t fixed = data.X * params.beta;

  ModeState st;
  st.b_star = (warm_b != nullptr && warm_b->size() == m) ? *warm_b : vec_t::Zero(m);

  auto inner_obj = [&](const vec_t& b) {
    return lik.log_density(data.y, fixed + Z.mult(b)) -
           0.5 * (sig_inv.array() * b.array().square()).sum();
  };

  double obj = inner_obj(st.b_star);
  if (!std::isfinite(obj)) {
    throw std::runtime_error("find_mode: non-finite inner objective at start");
  }

  for (index_t it = 0; it < max_newton; ++it) {
    st.mu_star = fixed + Z.mult(st.b_star);
    st.derivs = lik.eval_derivs(data.y, st.mu_star);
    const vec_t rhs = Z.mult_t(st.derivs.d1) - sig_inv.cwiseProduct(st.b_star);
    st.stationarity = rhs.cwiseAbs().maxCoeff();

    System sys = build_system(Z, st.derivs.W(), sig_inv, cfg);
    vec_t delta;
    if (backend == Backend::Cholesky) {
      Eigen::LLT<den_mat_t> llt(sys.nm->M.to_dense());
      delta = llt.solve(rhs);
    } else {
      // inexact Newton with a forcing term tied to the residual size
      const double tol = std::max(1e-12, std::min(cfg.cg_tol, 0.05 * rhs.norm()));
      delta = pcg_solve(*sys.nm, *sys.P, rhs, tol, cfg.cg_max_iter).u;
    }

    // full step unless the objective drops; then halve (log-concavity makes
    // full steps safe almost always)
    double step = 1.0;
    vec_t b_new = st.b_star + delta;
    double obj_new = inner_obj(b_new);
    for (int h = 0; h < 10 && !(obj_new >= obj); ++h) {
      step *= 0.5;
      b_new = st.b_star + step * delta;
      obj_new = inner_obj(b_new);
    }
    if (!std::isfinite(obj_new)) {
      throw std::runtime_error("find_mode: non-finite inner objective");
    }
    st.b_star = b_new;
    st.newton_iters = it + 1;
    const double rel_change = std::fabs(obj_new - obj) / (1.0 + std::fabs(obj));
    obj = obj_new;
    if (rel_change <= tol_mode) {
      st.converged = true;
      break;
    }
  }
  if (!st.converged) {
    throw std::runtime_error("find_mode: Newton did not converge in " +
                             std::to_string(max_newton) + " iterations");
  }
  st.mu_star = fixed + Z.mult(st.b_star);
  st.derivs = lik.eval_derivs(data.y, st.mu_star);
  st.stationarity = (Z.mult_t(st.derivs.d1) - sig_inv.cwiseProduct(st.b_star))
                        .cwiseAbs().maxCoeff();
  st.inner_objective = obj;
  return st;
}

NLLBundle gaussian_nll(const GroupedDesign& data, const ModelParams& params,
                       Backend backend, const KrylovConfig& cfg, bool want_grad) {
  params.validate();
  const IncidenceMatrix& Z = data.Z;
  const index_t n = data.num_obs();
  const index_t m = Z.cols();
  const index_t K = Z.num_factors();
  const double s2 = params.sigma2;
  const vec_t sig_inv = params.sigma_inv_diag(data.re.levels_per_factor);
  const vec_t W = vec_t::Constant(n, 1.0 / s2);
  const vec_t r = data.y - data.X * params.beta;

  NLLBundle out;
  out.backend = backend;

  double logdet_m = 0.0;
  vec_t a;  // M^{-1} Z^T r
  GradOps ops;
  std::optional<DenseOracle> oracle;
  System sys;
  SLQCache cache;
  std::unique_ptr<SteEngine> ste;

  if (backend == Backend::Cholesky) {
    oracle.emplace(data, params, LikelihoodKind::GaussianIdentity);
    oracle->factorize(W, want_grad);
    logdet_m = oracle->logdet_m();
    a = oracle->solve(Z.mult_t(r));
    if (want_grad) {
      ops.trace_diag = [&](const vec_t& C) { return oracle->trace_diag(C); };
    }
  } else {
    sys = build_system(Z, W, sig_inv, cfg);
    out.zic_fallback = sys.zic_fallback;
    ProbeSet probes(cfg.num_probes, ProbeKind::GaussianP, cfg.probe_seed);
    SLQEstimate est = slq_logdet(*sys.nm, *sys.P, probes, cfg.cg_tol, cfg.cg_max_iter,
                                 want_grad ? &cache : nullptr);
    logdet_m = est.logdet;
    out.slq_sd = est.remainder_sd();
    out.mean_cg_iters = est.mean_cg_iters;
    out.cg_unconverged = est.num_unconverged;
    a = pcg_solve(*sys.nm, *sys.P, Z.mult_t(r), cfg.cg_tol, cfg.cg_max_iter).u;
    if (want_grad) {
      const bool use_cv = sys.P->kind() == PrecondKind::SSOR;
      ste = std::make_unique<SteEngine>(Z, *sys.nm, cache, use_cv);
      ops.trace_diag = [&](const vec_t& C) { return ste->trace_diag(C); };
    }
  }

  // Psi^{-1} r through the Woodbury identity
  const vec_t q = r / s2 - Z.mult(a) / (s2 * s2);
  const double quad = r.dot(q);
  double logdet_sigma = 0.0;
  for (index_t k = 0; k < K; ++k) {
    logdet_sigma += Z.factor_size(k) * std::log(params.sigma2_re[k]);
  }
  out.logdet_m = logdet_m;
  out.nll = 0.5 * n * std::log(2.0 * std::numbers::pi) +
            0.5 * (logdet_m + logdet_sigma + n * std::log(s2)) + 0.5 * quad;

  if (!want_grad) return out;

  out.grad_log_sigma2_re.resize(K);
  for (index_t k = 0; k < K; ++k) {
    const double s2k = params.sigma2_re[k];
    vec_t C = vec_t::Zero(m);
    C.segment(Z.factor_offset(k), Z.factor_size(k))
        .setConstant(-1.0 / (s2k * s2k));
    const double tr_k = ops.trace_diag(C);
    const vec_t zkq = Z.mult_factor_t(k, q);
    const double d_s2k =
        0.5 * (tr_k + Z.factor_size(k) / s2k) - 0.5 * zkq.squaredNorm();
    out.grad_log_sigma2_re[k] = s2k * d_s2k;
  }
  // tr(Psi^{-1}) = (n - m + tr(M^{-1} Sigma^{-1})) / sigma^2
  const double tr_m_sig = ops.trace_diag(sig_inv);
  const double tr_psi_inv = (n - m + tr_m_sig) / s2;
  const double d_s2 = 0.5 * tr_psi_inv - 0.5 * q.squaredNorm();
  out.grad_log_sigma2 = s2 * d_s2;
  out.grad_beta = -data.X.transpose() * q;
  return out;
}

NLLBundle laplace_nll(const GroupedDesign& data, const ModelParams& params,
                      LikelihoodKind kind, const ModeState& mode, Backend backend,
                      const KrylovConfig& cfg, bool want_grad) {
  params.validate();
  if (!mode.converged) {
    throw std::invalid_argument("laplace_nll: mode not converged");
  }
  const Likelihood lik = make_likelihood(kind, params);
  const IncidenceMatrix& Z = data.Z;
  const index_t m = Z.cols();
  const index_t K = Z.num_factors();
  const vec_t sig_inv = params.sigma_inv_diag(data.re.levels_per_factor);
  const vec_t W = mode.derivs.W();

  NLLBundle out;
  out.backend = backend;

  GradOps ops;
  std::optional<DenseOracle> oracle;
  System sys;
  SLQCache cache;
  std::unique_ptr<SteEngine> ste;
  double logdet_m = 0.0;

  if (backend == Backend::Cholesky) {
    oracle.emplace(data, params, kind);
    oracle->factorize(W, want_grad);
    logdet_m = oracle->logdet_m();
    if (want_grad) {
      ops.trace_diag = [&](const vec_t& C) { return oracle->trace_diag(C); };
      ops.trace_obs = [&](const vec_t& w) { return oracle->trace_obs_weighted(w); };
      ops.mode_grad = [&](const vec_t& d3) {
        return vec_t(-d3.cwiseProduct(oracle->quad_diag_obs()));
      };
      ops.solve = [&](const vec_t& rhs) { return oracle->solve(rhs); };
    }
  } else {
    sys = build_system(Z, W, sig_inv, cfg);
    out.zic_fallback = sys.zic_fallback;
    ProbeSet probes(cfg.num_probes, ProbeKind::GaussianP, cfg.probe_seed);
    SLQEstimate est = slq_logdet(*sys.nm, *sys.P, probes, cfg.cg_tol, cfg.cg_max_iter,
                                 want_grad ? &cache : nullptr);
    logdet_m = est.logdet;
    out.slq_sd = est.remainder_sd();
    out.mean_cg_iters = est.mean_cg_iters;
    out.cg_unconverged = est.num_unconverged;
    if (want_grad) {
      const bool use_cv = sys.P->kind() == PrecondKind::SSOR;
      ste = std::make_unique<SteEngine>(Z, *sys.nm, cache, use_cv);
      ops.trace_diag = [&](const vec_t& C) { return ste->trace_diag(C); };
      ops.trace_obs = [&](const vec_t& w) { return ste->trace_obs_weighted(w); };
      ops.mode_grad = [&](const vec_t& d3) { return ste->mode_grad(d3); };
      ops.solve = [&](const vec_t& rhs) {
        return pcg_solve(*sys.nm, *sys.P, rhs, cfg.cg_tol, cfg.cg_max_iter).u;
      };
    }
  }

  double logdet_sigma = 0.0;
  for (index_t k = 0; k < K; ++k) {
    logdet_sigma += Z.factor_size(k) * std::log(params.sigma2_re[k]);
  }
  const double prior_quad = (sig_inv.array() * mode.b_star.array().square()).sum();
  out.logdet_m = logdet_m;
  out.nll = -mode.derivs.logp + 0.5 * prior_quad + 0.5 * logdet_sigma +
            0.5 * logdet_m;

  if (!want_grad) return out;

  // d logdet(M) / d mu*_i, then the shared adjoint solve
  const vec_t v = ops.mode_grad(mode.derivs.d3);
  const vec_t s_b = 0.5 * Z.mult_t(v);
  const vec_t lambda = ops.solve(s_b);
  const vec_t Zlambda = Z.mult(lambda);

  out.grad_log_sigma2_re.resize(K);
  for (index_t k = 0; k < K; ++k) {
    const double s2k = params.sigma2_re[k];
    const double inv_s4 = 1.0 / (s2k * s2k);
    const auto bk = mode.b_star.segment(Z.factor_offset(k), Z.factor_size(k));
    const auto lk = lambda.segment(Z.factor_offset(k), Z.factor_size(k));
    vec_t C = vec_t::Zero(m);
    C.segment(Z.factor_offset(k), Z.factor_size(k)).setConstant(-inv_s4);
    const double explicit_part = -0.5 * inv_s4 * bk.squaredNorm() +
                                 0.5 * Z.factor_size(k) / s2k +
                                 0.5 * ops.trace_diag(C);
    const double implicit_part = inv_s4 * lk.dot(bk);
    out.grad_log_sigma2_re[k] = s2k * (explicit_part + implicit_part);
  }

  out.grad_beta = data.X.transpose() *
                  (-mode.derivs.d1 + 0.5 * v - W.cwiseProduct(Zlambda));

  if (lik.is_gaussian()) {
    const vec_t dW = lik.dW_daux(data.y, mode.mu_star);
    const double explicit_part =
        -lik.dlogp_daux(data.y, mode.mu_star) + 0.5 * ops.trace_obs(dW);
    const double implicit_part = Zlambda.dot(lik.d1_daux(data.y, mode.mu_star));
    out.grad_log_sigma2 = params.sigma2 * (explicit_part + implicit_part);
  }
  return out;
}

NLLBundle evaluate_nll(const GroupedDesign& data, const ModelParams& params,
                       LikelihoodKind kind, Backend backend, const KrylovConfig& cfg,
                       ModeState* mode_io, bool want_grad) {
  if (kind == LikelihoodKind::GaussianIdentity) {
    return gaussian_nll(data, params, backend, cfg, want_grad);
  }
  const vec_t* warm = (mode_io != nullptr && mode_io->b_star.size() == data.Z.cols())
                          ? &mode_io->b_star
                          : nullptr;
  ModeState mode = find_mode(data, params, kind, backend, cfg, 1e-8, 100, warm);
  NLLBundle out = laplace_nll(data, params, kind, mode, backend, cfg, want_grad);
  if (mode_io != nullptr) *mode_io = std::move(mode);
  return out;
}

}  // namespace gmmk
