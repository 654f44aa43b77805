#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <gmmk/preconditioner.hpp>

#include "helpers.hpp"

using namespace gmmk;

namespace {

NormalMatrix crossed_normal_matrix(index_t m1, index_t m2, index_t d,
                                   double sigma2, double sigma2_re,
                                   IncidenceMatrix* Z_out, vec_t* W_out,
                                   vec_t* sig_inv_out, std::uint64_t seed = 19) {
  RNG rng = make_rng(seed);
  auto levels = gmmk::test::balanced_crossed_levels({m1, m2}, d, rng);
  auto [Z, re] = build_incidence_from_levels(levels, {m1, m2});
  vec_t W = vec_t::Constant(Z.rows(), 1.0 / sigma2);
  vec_t sig_inv = vec_t::Constant(Z.cols(), 1.0 / sigma2_re);
  NormalMatrix nm = assemble_normal_matrix(Z, W, sig_inv);
  if (Z_out) *Z_out = Z;
  if (W_out) *W_out = W;
  if (sig_inv_out) *sig_inv_out = sig_inv;
  return nm;
}

NormalMatrix from_dense(const den_mat_t& A) {
  SparseSym S;
  S.mat = A.sparseView();
  return split_normal_matrix(std::move(S));
}

}  // namespace

TEST_CASE("SSOR collapses to D when L = 0") {
  den_mat_t A = vec_t::LinSpaced(4, 1.0, 4.0).asDiagonal();
  NormalMatrix nm = from_dense(A);
  auto P = make_preconditioner(PrecondKind::SSOR, nm);
  den_mat_t Pd = test::dense_from_solve(*P);
  CHECK((Pd - A).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("SSOR on [[3,2],[2,3]]") {
  den_mat_t A(2, 2);
  A << 3, 2, 2, 3;
  NormalMatrix nm = from_dense(A);
  auto P = make_preconditioner(PrecondKind::SSOR, nm);
  den_mat_t Pd = test::dense_from_solve(*P);
  den_mat_t expected(2, 2);
  expected << 3, 2, 2, 13.0 / 3.0;
  CHECK((Pd - expected).cwiseAbs().maxCoeff() <= 1e-12);
  // logdet(P) = logdet(D) for SSOR; the dense oracle on this P gives log 9
  CHECK(P->logdet() == doctest::Approx(std::log(Pd.determinant())).epsilon(1e-12));
  CHECK(P->logdet() == doctest::Approx(std::log(9.0)));
}

TEST_CASE("SSOR-preconditioned matrix has the K=2 block identity form") {
  IncidenceMatrix Z;
  vec_t W, sig_inv;
  NormalMatrix nm = crossed_normal_matrix(6, 4, 4, 0.5, 0.3, &Z, &W, &sig_inv);
  auto P = make_preconditioner(PrecondKind::SSOR, nm);

  den_mat_t Md = nm.M.to_dense();
  const index_t m = Md.rows(), m1 = 6;
  // symmetric form via the triangular factor P^{1/2} = (L+D) D^{-1/2}
  den_mat_t S = P->inv_sqrt_times(den_mat_t::Identity(m, m));
  S = S * Md * S.transpose();

  den_mat_t Zd = den_mat_t(Z.to_sparse());
  den_mat_t Z1 = Zd.leftCols(m1), Z2 = Zd.rightCols(m - m1);
  den_mat_t D1 = Md.topLeftCorner(m1, m1).diagonal().asDiagonal();
  den_mat_t block = Z2.transpose() * W.asDiagonal() * Z1 * D1.inverse() *
                    Z1.transpose() * W.asDiagonal() * Z2;
  vec_t d2_inv_sqrt = Md.diagonal().tail(m - m1).cwiseSqrt().cwiseInverse();
  den_mat_t expected = den_mat_t::Identity(m, m);
  expected.bottomRightCorner(m - m1, m - m1) -=
      d2_inv_sqrt.asDiagonal() * block * d2_inv_sqrt.asDiagonal();
  CHECK((S - expected).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("ZIC on a diagonal matrix is the exact square root") {
  den_mat_t A = vec_t::LinSpaced(5, 2.0, 6.0).asDiagonal();
  NormalMatrix nm = from_dense(A);
  auto P = make_preconditioner(PrecondKind::ZIC, nm);
  den_mat_t Pd = test::dense_from_solve(*P);
  CHECK((Pd - A).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(P->logdet() == doctest::Approx(test::dense_logdet(A)).epsilon(1e-12));
}

TEST_CASE("ZIC equals the exact Cholesky factor when there is no fill-in") {
  // tridiagonal SPD matrix
  const index_t m = 12;
  den_mat_t A = den_mat_t::Zero(m, m);
  for (index_t i = 0; i < m; ++i) {
    A(i, i) = 4.0 + 0.1 * i;
    if (i > 0) {
      A(i, i - 1) = -1.0;
      A(i - 1, i) = -1.0;
    }
  }
  NormalMatrix nm = from_dense(A);
  sp_mat_t L = zic_factor(nm.L_plus_D);
  Eigen::LLT<den_mat_t> llt(A);
  den_mat_t Lref = llt.matrixL();
  CHECK((den_mat_t(L) - Lref).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("ZIC breakdown raises a recoverable error") {
  // arrowhead matrix with A_22 - L_21^2 <= 0 after eliminating the first row
  den_mat_t A(3, 3);
  A << 1.0, 2.0, 0.0,
       2.0, 3.0, 1.0,
       0.0, 1.0, 5.0;
  NormalMatrix nm = from_dense(A);
  CHECK_THROWS_AS(make_preconditioner(PrecondKind::ZIC, nm), ZicBreakdownError);
}

TEST_CASE("diagonal preconditioner") {
  den_mat_t A = den_mat_t::Identity(3, 3);
  NormalMatrix nm = from_dense(A);
  auto P = make_preconditioner(PrecondKind::Diagonal, nm);
  CHECK((test::dense_from_solve(*P) - A).cwiseAbs().maxCoeff() <= 1e-14);

  IncidenceMatrix Z;
  NormalMatrix nm2 = crossed_normal_matrix(8, 8, 10, 0.25, 0.25, &Z, nullptr, nullptr);
  auto P2 = make_preconditioner(PrecondKind::Diagonal, nm2);
  den_mat_t P2d = test::dense_from_solve(*P2);
  CHECK((P2d - 44.0 * den_mat_t::Identity(16, 16)).cwiseAbs().maxCoeff() <= 1e-9);
  RNG rng = make_rng(2);
  std::normal_distribution<double> ndist;
  vec_t v(16);
  for (auto& x : v) x = ndist(rng);
  CHECK((P2->solve(v) - v / 44.0).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("low-rank preconditioner with k = m reproduces M") {
  // Pivoted Cholesky is exact at full rank on any instance; the Lanczos
  // variant needs a simple spectrum (one Krylov space must span the range),
  // so it gets an unbalanced design with varying weights.
  {
    IncidenceMatrix Z;
    vec_t W, sig_inv;
    NormalMatrix nm = crossed_normal_matrix(6, 3, 3, 0.4, 0.6, &Z, &W, &sig_inv);
    const index_t m = nm.dim();
    auto P = make_lowrank_preconditioner(PrecondKind::PivotedCholesky, Z, W, sig_inv, m);
    den_mat_t Md = nm.M.to_dense();
    RNG rng = make_rng(5);
    std::normal_distribution<double> ndist;
    vec_t v(m);
    for (auto& x : v) x = ndist(rng);
    CHECK((P->solve(v) - Md.ldlt().solve(v)).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(P->logdet() == doctest::Approx(test::dense_logdet(Md)).epsilon(1e-10));
  }
  {
    RNG rng = make_rng(211);
    auto levels = gmmk::test::random_crossed_levels(60, {7, 5}, rng);
    auto [Z, re] = build_incidence_from_levels(levels, {7, 5});
    std::uniform_real_distribution<double> unif(0.2, 3.0);
    vec_t W(Z.rows()), sig_inv(Z.cols());
    for (auto& w : W) w = unif(rng);
    for (auto& s : sig_inv) s = unif(rng);
    NormalMatrix nm = assemble_normal_matrix(Z, W, sig_inv);
    const index_t m = nm.dim();
    auto P = make_lowrank_preconditioner(PrecondKind::LanczosLowRank, Z, W, sig_inv, m, 31);
    den_mat_t Md = nm.M.to_dense();
    std::normal_distribution<double> ndist;
    vec_t v(m);
    for (auto& x : v) x = ndist(rng);
    CHECK((P->solve(v) - Md.ldlt().solve(v)).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(P->logdet() == doctest::Approx(test::dense_logdet(Md)).epsilon(1e-10));
  }
}

TEST_CASE("low-rank preconditioner with k = 0 is Sigma^{-1}") {
  IncidenceMatrix Z;
  vec_t W, sig_inv;
  crossed_normal_matrix(6, 3, 3, 0.4, 0.6, &Z, &W, &sig_inv);
  auto P = make_lowrank_preconditioner(PrecondKind::PivotedCholesky, Z, W, sig_inv, 0);
  den_mat_t Pd = test::dense_from_solve(*P);
  CHECK((Pd - den_mat_t(sig_inv.asDiagonal())).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("pivoted Cholesky recovers a rank-2 Z^T W Z exactly") {
  // K = 1 with two levels: Z^T W Z is diagonal with rank 2
  auto [Z, re] = build_incidence({{"a", "b", "a", "b"}}, 4);
  vec_t W(4);
  W << 0.5, 1.5, 2.0, 1.0;
  den_mat_t L = pivoted_cholesky(Z, W, 2);
  den_mat_t A = den_mat_t(Z.to_sparse()).transpose() * W.asDiagonal() *
                den_mat_t(Z.to_sparse());
  CHECK((L * L.transpose() - A).norm() <= 1e-10);
}

TEST_CASE("pivoted Cholesky stops early on rank deficiency") {
  auto [Z, re] = build_incidence({{"a", "b", "a", "b"}}, 4);
  vec_t W = vec_t::Ones(4);
  den_mat_t L = pivoted_cholesky(Z, W, 4);  // rank(A) = 2 < 4
  CHECK(L.cols() == 2);
}

TEST_CASE("solve round-trip and logdet for every kind") {
  IncidenceMatrix Z;
  vec_t W, sig_inv;
  NormalMatrix nm = crossed_normal_matrix(10, 5, 5, 0.3, 0.5, &Z, &W, &sig_inv);
  const index_t m = nm.dim();
  RNG rng = make_rng(13);
  std::normal_distribution<double> ndist;
  vec_t x(m);
  for (auto& v : x) v = ndist(rng);

  auto check = [&](const Preconditioner& P) {
    den_mat_t Pd = test::dense_from_solve(P);
    Eigen::SelfAdjointEigenSolver<den_mat_t> es(Pd);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
    CHECK((P.solve(Pd * x) - x).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(P.logdet() == doctest::Approx(test::dense_logdet(Pd)).epsilon(1e-10));
    // P^{-1/2}-based quadratic form agrees with solve-based one
    CHECK(P.inv_quad(x) == doctest::Approx(x.dot(P.solve(x))).epsilon(1e-12));
  };

  for (PrecondKind kind : {PrecondKind::SSOR, PrecondKind::ZIC, PrecondKind::Diagonal,
                           PrecondKind::None}) {
    auto P = make_preconditioner(kind, nm);
    check(*P);
    if (P->has_inv_sqrt()) {
      // columns of P^{-1/2} reproduce P^{-1}
      den_mat_t B = P->inv_sqrt_times(den_mat_t::Identity(m, m));
      den_mat_t Pinv_rebuilt = B.transpose() * B;
      den_mat_t Pd = test::dense_from_solve(*P);
      CHECK((Pinv_rebuilt - Pd.inverse()).cwiseAbs().maxCoeff() <= 1e-9);
    }
  }
  for (PrecondKind kind : {PrecondKind::PivotedCholesky, PrecondKind::LanczosLowRank}) {
    auto P = make_lowrank_preconditioner(kind, Z, W, sig_inv, 6, 77);
    check(*P);
  }
}

TEST_CASE("sample covariance matches dense P") {
  den_mat_t A(4, 4);
  A << 5.0, 1.0, 0.0, 0.5,
       1.0, 4.0, 1.0, 0.0,
       0.0, 1.0, 6.0, 1.0,
       0.5, 0.0, 1.0, 5.0;
  NormalMatrix nm = from_dense(A);
  const int nsamp = 100000;
  for (PrecondKind kind : {PrecondKind::SSOR, PrecondKind::ZIC, PrecondKind::Diagonal}) {
    auto P = make_preconditioner(kind, nm);
    den_mat_t Pd = test::dense_from_solve(*P);
    RNG rng = make_rng(101);
    den_mat_t cov = den_mat_t::Zero(4, 4);
    for (int s = 0; s < nsamp; ++s) {
      vec_t z = P->sample(rng);
      cov += z * z.transpose();
    }
    cov /= nsamp;
    // entrywise 3 standard errors; Var(z_i z_j) <= P_ii P_jj + P_ij^2
    for (index_t i = 0; i < 4; ++i) {
      for (index_t j = 0; j < 4; ++j) {
        const double se = std::sqrt(
            (Pd(i, i) * Pd(j, j) + Pd(i, j) * Pd(i, j)) / nsamp);
        CHECK(std::fabs(cov(i, j) - Pd(i, j)) <= 3.5 * se);
      }
    }
  }
}

TEST_CASE("two-block low-rank sampling has covariance P") {
  IncidenceMatrix Z;
  vec_t W, sig_inv;
  crossed_normal_matrix(2, 2, 2, 0.5, 0.8, &Z, &W, &sig_inv, 41);
  auto P = make_lowrank_preconditioner(PrecondKind::PivotedCholesky, Z, W, sig_inv, 2);
  den_mat_t Pd = test::dense_from_solve(*P);
  RNG rng = make_rng(59);
  const int nsamp = 100000;
  den_mat_t cov = den_mat_t::Zero(4, 4);
  for (int s = 0; s < nsamp; ++s) {
    vec_t z = P->sample(rng);
    cov += z * z.transpose();
  }
  cov /= nsamp;
  for (index_t i = 0; i < 4; ++i) {
    for (index_t j = 0; j < 4; ++j) {
      const double se =
          std::sqrt((Pd(i, i) * Pd(j, j) + Pd(i, j) * Pd(i, j)) / nsamp);
      CHECK(std::fabs(cov(i, j) - Pd(i, j)) <= 3.5 * se);
    }
  }
}

TEST_CASE("identity kind: solve is identity, logdet is zero") {
  den_mat_t A = den_mat_t::Identity(3, 3) * 2.0;
  NormalMatrix nm = from_dense(A);
  auto P = make_preconditioner(PrecondKind::None, nm);
  vec_t v(3);
  v << 1, 2, 3;
  CHECK((P->solve(v) - v).norm() == 0.0);
  CHECK(P->logdet() == 0.0);
}

TEST_CASE("kind names round-trip") {
  for (PrecondKind kind : {PrecondKind::SSOR, PrecondKind::ZIC, PrecondKind::Diagonal,
                           PrecondKind::PivotedCholesky, PrecondKind::LanczosLowRank,
                           PrecondKind::None}) {
    CHECK(parse_precond_kind(precond_kind_name(kind)) == kind);
  }
  CHECK_THROWS_AS(parse_precond_kind("ichol"), std::invalid_argument);
}
