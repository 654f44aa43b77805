#ifndef GMMK_BENCH_COMMON_HPP_
#define GMMK_BENCH_COMMON_HPP_

#include <gmmk/normal_matrix.hpp>
#include <gmmk/simulate.hpp>

namespace gmmk::bench {

struct Instance {
  GroupedDesign data;
  NormalMatrix nm;
  vec_t W;
  vec_t sig_inv;
};

inline Instance crossed_instance(index_t m_half, index_t d) {
  SimConfig cfg;
  cfg.m_k = {m_half, m_half};
  cfg.n = m_half * d;
  cfg.seed = 1234;
  SimData sim = simulate_dataset(cfg);
  Instance inst;
  inst.data = std::move(sim.train);
  inst.W = vec_t::Constant(inst.data.num_obs(), 1.0 / 0.25);
  ModelParams params;
  params.sigma2_re = vec_t::Constant(2, 0.25);
  params.sigma2 = 0.25;
  params.beta = sim.truth.beta;
  inst.sig_inv = params.sigma_inv_diag(inst.data.re.levels_per_factor);
  inst.nm = assemble_normal_matrix(inst.data.Z, inst.W, inst.sig_inv);
  return inst;
}

}  // namespace gmmk::bench

#endif  // GMMK_BENCH_COMMON_HPP_
