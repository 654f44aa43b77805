#include <gmmk/optimizer.hpp>

#include <gmmk/oracle.hpp>

#include <Eigen/Cholesky>

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace gmmk {

namespace {

vec_t pack_params(const ModelParams& p, bool gaussian) {
  const index_t K = p.sigma2_re.size();
  vec_t x(K + (gaussian ? 1 : 0) + p.beta.size());
  for (index_t k = 0; k < K; ++k) x[k] = std::log(p.sigma2_re[k]);
  index_t off = K;
  if (gaussian) x[off++] = std::log(p.sigma2);
  x.tail(p.beta.size()) = p.beta;
  return x;
}

ModelParams unpack_params(const ModelParams& base, const vec_t& x, bool gaussian) {
  ModelParams p = base;
  const index_t K = base.sigma2_re.size();
  for (index_t k = 0; k < K; ++k) p.sigma2_re[k] = std::exp(x[k]);
  index_t off = K;
  if (gaussian) p.sigma2 = std::exp(x[off++]);
  p.beta = x.tail(base.beta.size());
  return p;
}

}  // namespace

ModelParams default_init(const GroupedDesign& data, LikelihoodKind kind) {
  ModelParams p;
  const index_t K = data.re.num_factors;
  const double var_y =
      (data.y.array() - data.y.mean()).square().sum() / std::max<index_t>(1, data.y.size() - 1);
  const double base = kind == LikelihoodKind::GaussianIdentity ? var_y : 1.0;
  p.sigma2_re = vec_t::Constant(K, base / (K + 1));
  p.sigma2 = kind == LikelihoodKind::GaussianIdentity ? var_y / 2.0 : 1.0;
  p.beta = vec_t::Zero(data.X.cols());
  return p;
}

vec_t std_errors_from_fisher(const den_mat_t& fisher, bool* singular) {
  Eigen::LLT<den_mat_t> llt(fisher);
  if (llt.info() != Eigen::Success) {
    if (singular != nullptr) *singular = true;
    return vec_t();
  }
  if (singular != nullptr) *singular = false;
  den_mat_t inv = llt.solve(den_mat_t::Identity(fisher.rows(), fisher.cols()));
  return inv.diagonal().cwiseSqrt();
}

FitResult fit(const GroupedDesign& data, LikelihoodKind kind, const ModelParams& init,
              Backend backend, const KrylovConfig& kcfg, const OptimizerConfig& ocfg) {
  const auto t_start = std::chrono::steady_clock::now();
  const bool gaussian = kind == LikelihoodKind::GaussianIdentity;
  init.validate();

  FitResult res;
  res.likelihood = kind;
  res.backend = backend;
  res.krylov = kcfg;
  res.params = init;

  ModeState mode;
  vec_t x = pack_params(init, gaussian);

  NLLBundle cur = evaluate_nll(data, res.params, kind, backend, kcfg, &mode);
  res.nll_evaluations = 1;
  if (!std::isfinite(cur.nll)) {
    throw std::runtime_error("fit: non-finite objective at the initial values");
  }
  res.nll_trace.push_back(cur.nll);
  res.zic_fallback = cur.zic_fallback;

  double step = 1.0;
  std::string reason = "max_iterations";
  for (index_t it = 0; it < ocfg.max_iters; ++it) {
    vec_t grad = cur.packed_gradient(gaussian);
    res.final_gradient = grad;
    if (grad.cwiseAbs().maxCoeff() <= ocfg.grad_tol) {
      reason = "gradient_tolerance";
      break;
    }

    if (ocfg.fisher_scoring && gaussian) {
      // damped Fisher-scoring step for theta on the natural scale, then the
      // usual gradient step handles beta and sigma^2
      ModelParams p_now = unpack_params(res.params, x, gaussian);
      const index_t K = p_now.sigma2_re.size();
      den_mat_t F;
      if (backend == Backend::Cholesky) {
        F = chol_fisher(data, p_now);
      } else {
        const vec_t sig_inv = p_now.sigma_inv_diag(data.re.levels_per_factor);
        const vec_t W = vec_t::Constant(data.num_obs(), 1.0 / p_now.sigma2);
        NormalMatrix nm = assemble_normal_matrix(data.Z, W, sig_inv);
        auto P = make_preconditioner(PrecondKind::SSOR, nm);
        ProbeSet probes(ocfg.fisher_probes, ProbeKind::GaussianI,
                        kcfg.probe_seed ^ 0x9e37u);
        F = ste_fisher_information(data.Z, nm, *P, p_now.sigma2, probes, kcfg.cg_tol,
                                   kcfg.cg_max_iter);
      }
      Eigen::LLT<den_mat_t> llt(F);
      if (llt.info() == Eigen::Success) {
        vec_t g_nat(K);
        for (index_t k = 0; k < K; ++k) g_nat[k] = grad[k] / p_now.sigma2_re[k];
        const vec_t delta_nat = llt.solve(-g_nat);
        double fs_step = 1.0;
        for (int h = 0; h < 12; ++h, fs_step *= 0.5) {
          vec_t theta_try = p_now.sigma2_re + fs_step * delta_nat;
          if ((theta_try.array() <= 0.0).any()) continue;
          vec_t x_try = x;
          for (index_t k = 0; k < K; ++k) x_try[k] = std::log(theta_try[k]);
          ModelParams p_try = unpack_params(res.params, x_try, gaussian);
          ModeState mode_try = mode;
          NLLBundle trial;
          try {
            trial = evaluate_nll(data, p_try, kind, backend, kcfg, &mode_try);
          } catch (const std::runtime_error&) {
            continue;
          }
          ++res.nll_evaluations;
          if (std::isfinite(trial.nll) && trial.nll < cur.nll) {
            x = x_try;
            cur = trial;
            mode = mode_try;
            res.params = p_try;
            grad = cur.packed_gradient(gaussian);
            break;
          }
        }
      }
    }

    vec_t direction = -grad;

    // Armijo backtracking; the accepted step seeds the next iteration
    const double slope = grad.dot(direction);
    double trial_step = std::min(step * 2.0, 1e6);
    bool accepted = false;
    NLLBundle next;
    ModeState mode_next = mode;
    vec_t x_next;
    for (index_t h = 0; h <= ocfg.max_halvings; ++h) {
      x_next = x + trial_step * direction;
      ModelParams p_next = unpack_params(res.params, x_next, gaussian);
      ModeState mode_try = mode;
      NLLBundle trial;
      try {
        trial = evaluate_nll(data, p_next, kind, backend, kcfg, &mode_try);
      } catch (const std::runtime_error&) {
        trial.nll = std::numeric_limits<double>::infinity();
      }
      ++res.nll_evaluations;
      if (std::isfinite(trial.nll) &&
          trial.nll <= cur.nll + 1e-4 * trial_step * slope) {
        accepted = true;
        next = trial;
        mode_next = mode_try;
        step = trial_step;
        break;
      }
      trial_step *= 0.5;
    }
    if (!accepted) {
      reason = "line_search_failure";
      break;
    }

    const double rel_change = std::fabs(cur.nll - next.nll) / (1.0 + std::fabs(cur.nll));
    x = x_next;
    cur = next;
    mode = mode_next;
    res.params = unpack_params(res.params, x, gaussian);
    res.nll_trace.push_back(cur.nll);
    res.iterations = it + 1;
    res.zic_fallback = res.zic_fallback || cur.zic_fallback;
    if (rel_change <= ocfg.rel_obj_tol) {
      reason = "objective_tolerance";
      break;
    }
  }
  res.convergence_reason = reason;
  res.final_gradient = cur.packed_gradient(gaussian);
  res.mode = mode;

  if (gaussian && ocfg.compute_std_errors) {
    if (backend == Backend::Cholesky) {
      res.fisher = chol_fisher(data, res.params);
    } else {
      const vec_t sig_inv = res.params.sigma_inv_diag(data.re.levels_per_factor);
      const vec_t W = vec_t::Constant(data.num_obs(), 1.0 / res.params.sigma2);
      NormalMatrix nm = assemble_normal_matrix(data.Z, W, sig_inv);
      auto P = make_preconditioner(PrecondKind::SSOR, nm);
      ProbeSet probes(std::max<index_t>(ocfg.fisher_probes, 200), ProbeKind::GaussianI,
                      kcfg.probe_seed ^ 0x51u);
      res.fisher = ste_fisher_information(data.Z, nm, *P, res.params.sigma2, probes,
                                          kcfg.cg_tol, kcfg.cg_max_iter);
    }
    res.std_errors_sigma2 = std_errors_from_fisher(res.fisher, &res.fisher_singular);
  }

  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return res;
}

}  // namespace gmmk
