#include <gmmk/cg.hpp>

#include <cmath>
#include <stdexcept>

namespace gmmk {

CGResult pcg_solve(const NormalMatrix& M, const Preconditioner& P, const vec_t& v,
                   double tol, index_t max_iter, bool capture_tridiag,
                   const vec_t* warm_start) {
  if (v.size() != M.dim()) {
    throw std::invalid_argument("pcg_solve: rhs dimension mismatch");
  }
  if (capture_tridiag && warm_start != nullptr) {
    throw std::invalid_argument("pcg_solve: tridiagonal capture needs a cold start");
  }
  const index_t m = M.dim();
  max_iter = std::min(max_iter, m);

  CGResult res;
  res.u = vec_t::Zero(m);
  vec_t r;
  if (warm_start != nullptr) {
    res.u = *warm_start;
    r = v - M.matvec(res.u);
  } else {
    r = v;
  }
  vec_t z = P.solve(r);
  double rz = r.dot(z);
  res.rhs_inv_quad = rz;
  if (capture_tridiag) {
    res.tridiag_alpha.resize(max_iter);
    res.tridiag_beta.resize(max_iter > 0 ? max_iter - 1 : 0);
  }
  res.residual_norm = r.norm();
  if (res.residual_norm == 0.0) {
    res.converged = true;
    if (capture_tridiag) {
      res.tridiag_alpha.resize(0);
      res.tridiag_beta.resize(0);
    }
    return res;
  }

  vec_t h = z;
  double alpha_prev = 1.0, beta_prev = 0.0;
  for (index_t j = 0; j < max_iter; ++j) {
    const vec_t w = M.matvec(h);
    const double hw = h.dot(w);
    if (hw <= 0.0) {
      throw std::runtime_error(
          "pcg_solve: h^T M h <= 0, matrix not positive definite");
    }
    const double alpha = rz / hw;
    res.u += alpha * h;
    r -= alpha * w;

    res.residual_norm = r.norm();
    res.iterations = j + 1;
    if (std::isnan(res.residual_norm) || std::isinf(res.residual_norm)) {
      throw std::runtime_error("pcg_solve: non-finite residual");
    }
    const bool early_stop = tol > 0.0 && res.residual_norm < tol;

    if (capture_tridiag) {
      res.tridiag_alpha[j] = 1.0 / alpha + beta_prev / alpha_prev;
      if (j > 0) {
        res.tridiag_beta[j - 1] = std::sqrt(beta_prev) / alpha_prev;
      }
    }
    if (early_stop || j + 1 == max_iter) {
      res.converged = early_stop || res.residual_norm < tol;
      if (capture_tridiag) {
        res.tridiag_alpha.conservativeResize(j + 1);
        res.tridiag_beta.conservativeResize(j);
      }
      return res;
    }

    z = P.solve(r);
    const double rz_new = r.dot(z);
    const double beta = rz_new / rz;
    rz = rz_new;
    h = z + beta * h;
    alpha_prev = alpha;
    beta_prev = beta;
  }
  return res;
}

}  // namespace gmmk
