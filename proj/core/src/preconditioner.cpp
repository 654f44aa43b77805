#include <gmmk/preconditioner.hpp>

#include <gmmk/lanczos.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

namespace gmmk {

std::string precond_kind_name(PrecondKind kind) {
  switch (kind) {
    case PrecondKind::SSOR: return "ssor";
    case PrecondKind::ZIC: return "zic";
    case PrecondKind::Diagonal: return "diagonal";
    case PrecondKind::PivotedCholesky: return "pivoted_cholesky";
    case PrecondKind::LanczosLowRank: return "lanczos";
    case PrecondKind::None: return "none";
  }
  return "unknown";
}

PrecondKind parse_precond_kind(const std::string& name) {
  if (name == "ssor") return PrecondKind::SSOR;
  if (name == "zic") return PrecondKind::ZIC;
  if (name == "diagonal") return PrecondKind::Diagonal;
  if (name == "pivoted_cholesky") return PrecondKind::PivotedCholesky;
  if (name == "lanczos") return PrecondKind::LanczosLowRank;
  if (name == "none") return PrecondKind::None;
  throw std::invalid_argument("unknown preconditioner: " + name);
}

namespace {

vec_t standard_normal(RNG& rng, index_t n) {
  std::normal_distribution<double> ndist(0.0, 1.0);
  vec_t z(n);
  for (index_t i = 0; i < n; ++i) z[i] = ndist(rng);
  return z;
}

class IdentityPrecond final : public Preconditioner {
 public:
  explicit IdentityPrecond(index_t m) : m_(m) {}
  PrecondKind kind() const override { return PrecondKind::None; }
  index_t dim() const override { return m_; }
  vec_t solve(const vec_t& v) const override { return v; }
  double logdet() const override { return 0.0; }
  vec_t sample(RNG& rng) const override { return standard_normal(rng, m_); }
  den_mat_t inv_sqrt_times(const den_mat_t& B) const override { return B; }

 private:
  index_t m_;
};

class DiagonalPrecond final : public Preconditioner {
 public:
  explicit DiagonalPrecond(vec_t d) : d_(std::move(d)) {
    if ((d_.array() <= 0.0).any()) {
      throw std::invalid_argument("DiagonalPrecond: nonpositive diagonal entry");
    }
    d_inv_ = d_.cwiseInverse();
    d_sqrt_ = d_.cwiseSqrt();
    logdet_ = d_.array().log().sum();
  }
  PrecondKind kind() const override { return PrecondKind::Diagonal; }
  index_t dim() const override { return d_.size(); }
  vec_t solve(const vec_t& v) const override { return d_inv_.cwiseProduct(v); }
  double logdet() const override { return logdet_; }
  vec_t sample(RNG& rng) const override {
    return d_sqrt_.cwiseProduct(standard_normal(rng, d_.size()));
  }
  den_mat_t inv_sqrt_times(const den_mat_t& B) const override {
    return d_sqrt_.cwiseInverse().asDiagonal() * B;
  }

 private:
  vec_t d_, d_inv_, d_sqrt_;
  double logdet_ = 0.0;
};

// P = (L+D) D^{-1} (L+D)^T with the cached split of the normal matrix.
// P^{1/2} = (L+D) D^{-1/2}, log det(P) = log det(D).
class SsorPrecond final : public Preconditioner {
 public:
  explicit SsorPrecond(const NormalMatrix& nm) : nm_(&nm) {
    if ((nm.D.array() <= 0.0).any()) {
      throw std::invalid_argument("SsorPrecond: nonpositive diagonal entry");
    }
    d_sqrt_ = nm.D.cwiseSqrt();
    logdet_ = nm.D.array().log().sum();
  }
  PrecondKind kind() const override { return PrecondKind::SSOR; }
  index_t dim() const override { return nm_->dim(); }
  vec_t solve(const vec_t& v) const override {
    vec_t u = nm_->L_plus_D.triangularView<Eigen::Lower>().solve(v);
    u.array() *= nm_->D.array();
    return nm_->L_plus_D.transpose().triangularView<Eigen::Upper>().solve(u);
  }
  double logdet() const override { return logdet_; }
  vec_t sample(RNG& rng) const override {
    vec_t e = standard_normal(rng, dim()).cwiseQuotient(d_sqrt_);
    return nm_->L_plus_D * e;
  }
  den_mat_t inv_sqrt_times(const den_mat_t& B) const override {
    // P^{-1/2} = D^{1/2} (L+D)^{-1}
    den_mat_t U = nm_->L_plus_D.triangularView<Eigen::Lower>().solve(B);
    return d_sqrt_.asDiagonal() * U;
  }

 private:
  const NormalMatrix* nm_;
  vec_t d_sqrt_;
  double logdet_ = 0.0;
};

class ZicPrecond final : public Preconditioner {
 public:
  explicit ZicPrecond(sp_mat_t L) : L_(std::move(L)) {
    logdet_ = 0.0;
    for (index_t i = 0; i < L_.rows(); ++i) {
      logdet_ += 2.0 * std::log(L_.coeff(i, i));
    }
  }
  PrecondKind kind() const override { return PrecondKind::ZIC; }
  index_t dim() const override { return L_.rows(); }
  vec_t solve(const vec_t& v) const override {
    vec_t u = L_.triangularView<Eigen::Lower>().solve(v);
    return L_.transpose().triangularView<Eigen::Upper>().solve(u);
  }
  double logdet() const override { return logdet_; }
  vec_t sample(RNG& rng) const override {
    return L_ * standard_normal(rng, dim());
  }
  den_mat_t inv_sqrt_times(const den_mat_t& B) const override {
    return L_.triangularView<Eigen::Lower>().solve(B);
  }
  const sp_mat_t& factor() const { return L_; }

 private:
  sp_mat_t L_;
  double logdet_ = 0.0;
};

// P = Sigma^{-1} + L_k L_k^T; solve and logdet via Woodbury and the matrix
// determinant lemma, sampling via the two-block construction
// z = Sigma^{-1/2} eps_1 + L_k eps_2.
class LowRankPrecond final : public Preconditioner {
 public:
  LowRankPrecond(PrecondKind kind, den_mat_t Lk, const vec_t& sigma_inv_diag)
      : kind_(kind), Lk_(std::move(Lk)), sigma_inv_(sigma_inv_diag) {
    sigma_ = sigma_inv_.cwiseInverse();
    const index_t k = Lk_.cols();
    den_mat_t S = den_mat_t::Identity(k, k);
    if (k > 0) {
      S += Lk_.transpose() * (sigma_.asDiagonal() * Lk_);
    }
    chol_S_.compute(S);
    if (chol_S_.info() != Eigen::Success) {
      throw std::runtime_error("LowRankPrecond: small-system Cholesky failed");
    }
    logdet_ = sigma_inv_.array().log().sum();
    for (index_t i = 0; i < k; ++i) {
      logdet_ += 2.0 * std::log(chol_S_.matrixL()(i, i));
    }
  }
  PrecondKind kind() const override { return kind_; }
  index_t dim() const override { return sigma_inv_.size(); }
  vec_t solve(const vec_t& v) const override {
    // P^{-1} = Sigma - Sigma L_k (I + L_k^T Sigma L_k)^{-1} L_k^T Sigma
    vec_t sv = sigma_.cwiseProduct(v);
    if (Lk_.cols() == 0) return sv;
    vec_t t = Lk_.transpose() * sv;
    return sv - sigma_.cwiseProduct(Lk_ * chol_S_.solve(t));
  }
  double logdet() const override { return logdet_; }
  vec_t sample(RNG& rng) const override {
    vec_t z = sigma_inv_.cwiseSqrt().cwiseProduct(standard_normal(rng, dim()));
    if (Lk_.cols() > 0) {
      z += Lk_ * standard_normal(rng, Lk_.cols());
    }
    return z;
  }
  bool has_inv_sqrt() const override { return false; }
  den_mat_t inv_sqrt_times(const den_mat_t&) const override {
    throw std::logic_error("LowRankPrecond has no triangular factor");
  }
  const den_mat_t& factor() const { return Lk_; }

 private:
  PrecondKind kind_;
  den_mat_t Lk_;
  vec_t sigma_inv_, sigma_;
  Eigen::LLT<den_mat_t> chol_S_;
  double logdet_ = 0.0;
};

}  // namespace

sp_mat_t zic_factor(const sp_mat_t& lower_incl_diag) {
  sp_mat_t L = lower_incl_diag;  // same pattern, values overwritten
  const index_t m = L.rows();
  const auto* outer = L.outerIndexPtr();
  const auto* inner = L.innerIndexPtr();
  double* val = L.valuePtr();
  const double* aval = lower_incl_diag.valuePtr();

  // sparse row-row dot product over columns < cap (indices sorted)
  auto row_dot = [&](index_t i, index_t j, index_t cap) {
    double s = 0.0;
    index_t pi = outer[i], pj = outer[j];
    const index_t ei = outer[i + 1], ej = outer[j + 1];
    while (pi < ei && pj < ej) {
      const index_t ci = inner[pi], cj = inner[pj];
      if (ci >= cap || cj >= cap) break;
      if (ci == cj) {
        s += val[pi] * val[pj];
        ++pi;
        ++pj;
      } else if (ci < cj) {
        ++pi;
      } else {
        ++pj;
      }
    }
    return s;
  };

  for (index_t i = 0; i < m; ++i) {
    for (index_t p = outer[i]; p < outer[i + 1]; ++p) {
      const index_t j = inner[p];
      if (j < i) {
        const double ljj = L.coeff(j, j);
        val[p] = (aval[p] - row_dot(i, j, j)) / ljj;
      } else {  // j == i, the diagonal closes each row of the lower pattern
        const double pivot = aval[p] - row_dot(i, i, i);
        if (pivot <= 0.0) {
          throw ZicBreakdownError("ZIC breakdown: nonpositive pivot at row " +
                                  std::to_string(i));
        }
        val[p] = std::sqrt(pivot);
      }
    }
  }
  return L;
}

den_mat_t pivoted_cholesky(const IncidenceMatrix& Z, const vec_t& W_diag,
                           index_t rank, double tol_rel) {
  const index_t m = Z.cols();
  const index_t n = Z.rows();
  const index_t K = Z.num_factors();
  rank = std::min(rank, m);

  // diag(Z^T W Z)
  vec_t d = vec_t::Zero(m);
  for (index_t k = 0; k < K; ++k) {
    const index_t off = Z.factor_offset(k);
    for (index_t i = 0; i < n; ++i) {
      d[off + Z.level(k, i)] += W_diag[i];
    }
  }
  const double trace0 = d.sum();

  // which factor owns global column c
  std::vector<index_t> owner(m);
  for (index_t k = 0; k < K; ++k) {
    for (index_t c = Z.factor_offset(k); c < Z.factor_offset(k + 1); ++c) {
      owner[c] = k;
    }
  }
  // observation lists per global column, for column evaluation of Z^T W Z
  std::vector<std::vector<index_t>> obs_of_col(m);
  for (index_t k = 0; k < K; ++k) {
    const index_t off = Z.factor_offset(k);
    for (index_t i = 0; i < n; ++i) {
      obs_of_col[off + Z.level(k, i)].push_back(i);
    }
  }
  auto column = [&](index_t c) {
    vec_t col = vec_t::Zero(m);
    for (index_t i : obs_of_col[c]) {
      const double w = W_diag[i];
      for (index_t k = 0; k < K; ++k) {
        col[Z.factor_offset(k) + Z.level(k, i)] += w;
      }
    }
    return col;
  };

  den_mat_t L = den_mat_t::Zero(m, rank);
  std::vector<index_t> perm(m);
  std::iota(perm.begin(), perm.end(), index_t{0});
  index_t k_eff = 0;
  for (index_t j = 0; j < rank; ++j) {
    index_t best = j;
    for (index_t i = j + 1; i < m; ++i) {
      if (d[perm[i]] > d[perm[best]]) best = i;
    }
    std::swap(perm[j], perm[best]);
    const index_t pj = perm[j];
    if (d[pj] <= tol_rel * trace0) break;  // residual exhausted before rank k
    const double ljj = std::sqrt(d[pj]);
    L(pj, j) = ljj;
    const vec_t col = column(pj);
    for (index_t i = j + 1; i < m; ++i) {
      const index_t pi = perm[i];
      double v = col[pi];
      if (j > 0) v -= L.row(pi).head(j).dot(L.row(pj).head(j));
      v /= ljj;
      L(pi, j) = v;
      d[pi] -= v * v;
    }
    k_eff = j + 1;
  }
  return L.leftCols(k_eff);
}

std::unique_ptr<Preconditioner> make_preconditioner(PrecondKind kind,
                                                    const NormalMatrix& nm) {
  switch (kind) {
    case PrecondKind::SSOR:
      return std::make_unique<SsorPrecond>(nm);
    case PrecondKind::ZIC:
      return std::make_unique<ZicPrecond>(zic_factor(nm.L_plus_D));
    case PrecondKind::Diagonal:
      return std::make_unique<DiagonalPrecond>(nm.D);
    case PrecondKind::None:
      return std::make_unique<IdentityPrecond>(nm.dim());
    default:
      throw std::invalid_argument(
          "make_preconditioner: low-rank kinds need make_lowrank_preconditioner");
  }
}

std::unique_ptr<Preconditioner> make_lowrank_preconditioner(
    PrecondKind kind, const IncidenceMatrix& Z, const vec_t& W_diag,
    const vec_t& sigma_inv_diag, index_t rank, std::uint64_t seed) {
  const index_t m = Z.cols();
  den_mat_t Lk;
  if (rank == 0) {
    Lk.resize(m, 0);
  } else if (kind == PrecondKind::PivotedCholesky) {
    Lk = pivoted_cholesky(Z, W_diag, rank);
  } else if (kind == PrecondKind::LanczosLowRank) {
    auto op = [&](const vec_t& x) { return Z.mult_t(W_diag.cwiseProduct(Z.mult(x))); };
    RNG rng = make_rng(seed, 0x1a2c);
    vec_t q0 = standard_normal(rng, m);
    LanczosResult lr = lanczos_partial(op, q0, rank);
    Eigen::SelfAdjointEigenSolver<den_mat_t> es;
    es.computeFromTridiagonal(lr.alpha, lr.beta);
    // Z^T W Z ~= Q V diag(lambda) V^T Q^T, keep the positive part
    index_t npos = 0;
    for (index_t i = 0; i < lr.rank; ++i) {
      if (es.eigenvalues()[i] > 0.0) ++npos;
    }
    Lk.resize(m, npos);
    index_t c = 0;
    for (index_t i = 0; i < lr.rank; ++i) {
      const double ev = es.eigenvalues()[i];
      if (ev > 0.0) {
        Lk.col(c++) = std::sqrt(ev) * (lr.Q * es.eigenvectors().col(i));
      }
    }
  } else {
    throw std::invalid_argument("make_lowrank_preconditioner: not a low-rank kind");
  }
  return std::make_unique<LowRankPrecond>(kind, std::move(Lk), sigma_inv_diag);
}

std::unique_ptr<Preconditioner> build_preconditioner(
    PrecondKind kind, const NormalMatrix& nm, const IncidenceMatrix& Z,
    const vec_t& W_diag, const vec_t& sigma_inv_diag, index_t rank,
    std::uint64_t seed) {
  if (kind == PrecondKind::PivotedCholesky || kind == PrecondKind::LanczosLowRank) {
    return make_lowrank_preconditioner(kind, Z, W_diag, sigma_inv_diag, rank, seed);
  }
  return make_preconditioner(kind, nm);
}

}  // namespace gmmk
