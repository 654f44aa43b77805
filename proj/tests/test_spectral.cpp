#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <gmmk/simulate.hpp>
#include <gmmk/spectral.hpp>

#include "helpers.hpp"

using namespace gmmk;

namespace {

struct Instance {
  IncidenceMatrix Z;
  NormalMatrix nm;
  ModelParams params;
  DesignInfo design;
};

Instance balanced_instance(index_t m1, index_t m2, index_t d, double s2,
                           double s21, double s22, std::uint64_t seed) {
  Instance inst;
  RNG rng = make_rng(seed);
  auto levels = gmmk::test::balanced_crossed_levels({m1, m2}, d, rng);
  auto [Z, re] = build_incidence_from_levels(levels, {m1, m2});
  inst.Z = Z;
  inst.params.sigma2_re.resize(2);
  inst.params.sigma2_re << s21, s22;
  inst.params.sigma2 = s2;
  inst.params.beta = vec_t::Zero(1);
  vec_t W = vec_t::Constant(Z.rows(), 1.0 / s2);
  vec_t sig_inv = inst.params.sigma_inv_diag({m1, m2});
  inst.nm = assemble_normal_matrix(inst.Z, W, sig_inv);
  inst.design = analyze_design(inst.Z, true);
  return inst;
}

}  // namespace

TEST_CASE("a full-rank low-rank preconditioner flattens the spectrum to one") {
  RNG rng = make_rng(101);
  auto levels = gmmk::test::balanced_crossed_levels({8, 4}, 4, rng);
  auto [Z, re] = build_incidence_from_levels(levels, {8, 4});
  vec_t W = vec_t::Constant(Z.rows(), 2.0);
  vec_t sig_inv = vec_t::Constant(Z.cols(), 1.5);
  NormalMatrix nm = assemble_normal_matrix(Z, W, sig_inv);
  auto P = make_lowrank_preconditioner(PrecondKind::PivotedCholesky, Z, W, sig_inv,
                                       Z.cols());
  SpectralReport rep = preconditioned_spectrum(nm, *P);
  CHECK((rep.eigenvalues.array() - 1.0).abs().maxCoeff() <= 1e-9);
}

TEST_CASE("SSOR leaves the top m_1 eigenvalues at exactly one") {
  Instance inst = balanced_instance(20, 20, 5, 0.4, 0.3, 0.6, 103);
  auto P = make_preconditioner(PrecondKind::SSOR, inst.nm);
  SpectralReport rep = preconditioned_spectrum(inst.nm, *P);
  for (index_t i = 20; i < 40; ++i) {
    CHECK(std::fabs(rep.eigenvalues[i] - 1.0) <= 1e-9);
  }
}

TEST_CASE("balanced d=10 closed forms for SSOR and diagonal preconditioning") {
  Instance inst = balanced_instance(40, 40, 10, 0.25, 0.25, 0.25, 107);
  auto P_ssor = make_preconditioner(PrecondKind::SSOR, inst.nm);
  auto P_diag = make_preconditioner(PrecondKind::Diagonal, inst.nm);
  SpectralReport ssor = preconditioned_spectrum(inst.nm, *P_ssor);
  SpectralReport diag = preconditioned_spectrum(inst.nm, *P_diag);

  CHECK(ssor.lambda_max == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(ssor.lambda_min ==
        doctest::Approx(1.0 - std::pow(10.0 / 11.0, 2.0)).epsilon(1e-8));
  CHECK(diag.lambda_max == doctest::Approx(1.0 + 10.0 / 11.0).epsilon(1e-8));
  CHECK(diag.lambda_min == doctest::Approx(1.0 - 10.0 / 11.0).epsilon(1e-8));
  CHECK(diag.kappa == doctest::Approx(21.0).epsilon(1e-8));
}

TEST_CASE("theorem report passes on a balanced Gaussian instance") {
  Instance inst = balanced_instance(24, 24, 10, 0.25, 0.25, 0.25, 109);
  auto P_ssor = make_preconditioner(PrecondKind::SSOR, inst.nm);
  auto P_diag = make_preconditioner(PrecondKind::Diagonal, inst.nm);
  auto P_none = make_preconditioner(PrecondKind::None, inst.nm);
  SpectralReport ssor = preconditioned_spectrum(inst.nm, *P_ssor);
  SpectralReport diag = preconditioned_spectrum(inst.nm, *P_diag);
  SpectralReport none = preconditioned_spectrum(inst.nm, *P_none);
  TheoremReport rep = theorem_bound_report(ssor, diag, none, inst.nm, inst.Z,
                                           inst.params, inst.design);
  CHECK(rep.all_passed());
  // equal variances: diagonal and no preconditioning share kappa = 2d+1
  bool found_equal_variance_check = false;
  for (const auto& c : rep.checks) {
    if (c.name == "diag-kappa-equal-variance") {
      found_equal_variance_check = true;
      CHECK(c.verdict == Verdict::Pass);
    }
  }
  CHECK(found_equal_variance_check);
}

TEST_CASE("theorem report on an unbalanced instance uses only general bounds") {
  RNG rng = make_rng(113);
  auto levels = gmmk::test::random_crossed_levels(300, {15, 10}, rng);
  auto [Z, re] = build_incidence_from_levels(levels, {15, 10});
  ModelParams params;
  params.sigma2_re = vec_t::Constant(2, 0.3);
  params.sigma2 = 0.5;
  params.beta = vec_t::Zero(1);
  vec_t W = vec_t::Constant(Z.rows(), 1.0 / params.sigma2);
  NormalMatrix nm = assemble_normal_matrix(Z, W, params.sigma_inv_diag({15, 10}));
  auto P_ssor = make_preconditioner(PrecondKind::SSOR, nm);
  auto P_diag = make_preconditioner(PrecondKind::Diagonal, nm);
  auto P_none = make_preconditioner(PrecondKind::None, nm);
  DesignInfo design = analyze_design(Z, true);
  CHECK_FALSE(design.balanced);
  TheoremReport rep = theorem_bound_report(
      preconditioned_spectrum(nm, *P_ssor), preconditioned_spectrum(nm, *P_diag),
      preconditioned_spectrum(nm, *P_none), nm, Z, params, design);
  CHECK(rep.all_passed());
}

TEST_CASE("biregular designs satisfy the effective-condition bounds") {
  SimConfig cfg;
  cfg.n = 3200;
  cfg.m_k = {200, 200};
  cfg.design = DesignKind::Biregular;
  cfg.seed = 127;
  SimData sim = simulate_dataset(cfg);
  DesignInfo design = analyze_design(sim.train.Z, true);
  CHECK(design.balanced);
  CHECK(design.cooccur_at_most_once);

  ModelParams params;
  params.sigma2_re = sim.truth.sigma2_re;
  params.sigma2 = sim.truth.sigma2;
  params.beta = sim.truth.beta;
  vec_t W = vec_t::Constant(sim.train.Z.rows(), 1.0 / params.sigma2);
  NormalMatrix nm = assemble_normal_matrix(sim.train.Z, W,
                                           params.sigma_inv_diag({200, 200}));
  auto P_ssor = make_preconditioner(PrecondKind::SSOR, nm);
  auto P_diag = make_preconditioner(PrecondKind::Diagonal, nm);
  auto P_none = make_preconditioner(PrecondKind::None, nm);
  TheoremReport rep = theorem_bound_report(
      preconditioned_spectrum(nm, *P_ssor), preconditioned_spectrum(nm, *P_diag),
      preconditioned_spectrum(nm, *P_none), nm, sim.train.Z, params, design);
  CHECK(rep.all_passed());
  int consistent = 0;
  for (const auto& c : rep.checks) {
    if (c.name.find("biregular") != std::string::npos) {
      CHECK(c.verdict == Verdict::Consistent);
      ++consistent;
    }
  }
  CHECK(consistent == 2);
}

TEST_CASE("extremal eigenvalues depend on d, not on m") {
  Instance small = balanced_instance(30, 30, 10, 0.25, 0.25, 0.25, 131);
  Instance large = balanced_instance(60, 60, 10, 0.25, 0.25, 0.25, 137);
  for (PrecondKind kind : {PrecondKind::SSOR, PrecondKind::Diagonal, PrecondKind::None}) {
    auto Ps = make_preconditioner(kind, small.nm);
    auto Pl = make_preconditioner(kind, large.nm);
    SpectralReport rs = preconditioned_spectrum(small.nm, *Ps);
    SpectralReport rl = preconditioned_spectrum(large.nm, *Pl);
    CHECK(std::fabs(rs.lambda_max - rl.lambda_max) <= 0.01 * rs.lambda_max);
    CHECK(std::fabs(rs.lambda_min - rl.lambda_min) <= 0.01 * rs.lambda_min);
  }
}

TEST_CASE("spectrum cap is enforced") {
  Instance inst = balanced_instance(10, 10, 3, 0.5, 0.5, 0.5, 139);
  auto P = make_preconditioner(PrecondKind::SSOR, inst.nm);
  CHECK_THROWS_AS(preconditioned_spectrum(inst.nm, *P, 5), std::invalid_argument);
}
