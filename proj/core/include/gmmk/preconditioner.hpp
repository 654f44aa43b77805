#ifndef GMMK_PRECONDITIONER_HPP_
#define GMMK_PRECONDITIONER_HPP_

#include <gmmk/grouped_data.hpp>
#include <gmmk/normal_matrix.hpp>
#include <gmmk/types.hpp>

#include <memory>
#include <stdexcept>
#include <string>

namespace gmmk {

enum class PrecondKind {
  SSOR,
  ZIC,
  Diagonal,
  PivotedCholesky,
  LanczosLowRank,
  None,
};

std::string precond_kind_name(PrecondKind kind);
PrecondKind parse_precond_kind(const std::string& name);

// Thrown when the zero fill-in incomplete Cholesky factorization hits a
// nonpositive pivot; callers may fall back to SSOR.
class ZicBreakdownError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Uniform contract: solve P u = v, logdet(P), and sample z ~ N(0, P).
// Built preconditioners are immutable; solve/sample are safe concurrently
// with caller-supplied rng streams.
class Preconditioner {
 public:
  virtual ~Preconditioner() = default;
  virtual PrecondKind kind() const = 0;
  virtual index_t dim() const = 0;

  virtual vec_t solve(const vec_t& v) const = 0;  // P^{-1} v
  virtual double logdet() const = 0;
  // z = P^{1/2} eps with eps standard normal (two-block for low-rank kinds)
  virtual vec_t sample(RNG& rng) const = 0;

  // v^T P^{-1} v
  virtual double inv_quad(const vec_t& v) const { return v.dot(solve(v)); }

  // P^{-1/2} B column-wise via the triangular/diagonal factor; low-rank
  // kinds have no such factor and return false from has_inv_sqrt().
  virtual bool has_inv_sqrt() const { return true; }
  virtual den_mat_t inv_sqrt_times(const den_mat_t& B) const = 0;
};

// SSOR / ZIC / diagonal / identity; the returned object borrows `nm` which
// must outlive it.
std::unique_ptr<Preconditioner> make_preconditioner(PrecondKind kind,
                                                    const NormalMatrix& nm);

// Low-rank kinds P = Sigma^{-1} + L_k L_k^T with Z^T W Z ~= L_k L_k^T via
// pivoted Cholesky or partial Lanczos (rank k, early stop on exhaustion).
std::unique_ptr<Preconditioner> make_lowrank_preconditioner(
    PrecondKind kind, const IncidenceMatrix& Z, const vec_t& W_diag,
    const vec_t& sigma_inv_diag, index_t rank, std::uint64_t seed = 0);

// Dispatches on kind; rank/seed only used by the low-rank kinds.
std::unique_ptr<Preconditioner> build_preconditioner(
    PrecondKind kind, const NormalMatrix& nm, const IncidenceMatrix& Z,
    const vec_t& W_diag, const vec_t& sigma_inv_diag, index_t rank = 50,
    std::uint64_t seed = 0);

// Zero fill-in incomplete Cholesky of A restricted to A's lower pattern.
// Throws ZicBreakdownError on a nonpositive pivot.
sp_mat_t zic_factor(const sp_mat_t& lower_incl_diag);

// Pivoted Cholesky of A = Z^T W Z up to rank k (columns of the returned
// factor are in pivot order; may have fewer than k columns on early stop).
den_mat_t pivoted_cholesky(const IncidenceMatrix& Z, const vec_t& W_diag,
                           index_t rank, double tol_rel = 1e-12);

}  // namespace gmmk

#endif  // GMMK_PRECONDITIONER_HPP_
