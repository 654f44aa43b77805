#ifndef GMMK_SPECTRAL_HPP_
#define GMMK_SPECTRAL_HPP_

#include <gmmk/grouped_data.hpp>
#include <gmmk/model_params.hpp>
#include <gmmk/normal_matrix.hpp>
#include <gmmk/preconditioner.hpp>
#include <gmmk/types.hpp>

#include <string>
#include <vector>

namespace gmmk {

// Design metadata the eigenvalue bounds are parameterized by
struct DesignInfo {
  index_t n = 0;
  std::vector<index_t> m_k;
  vec_t d_k;          // n / m_k
  double d_min = 0.0;  // smallest / largest observed occurrence count
  double d_max = 0.0;
  bool balanced = false;
  bool cooccur_at_most_once = false;  // Z_2^T Z_1 in {0,1}
  bool gaussian = true;
};

DesignInfo analyze_design(const IncidenceMatrix& Z, bool gaussian);

struct SpectralReport {
  PrecondKind kind = PrecondKind::None;
  vec_t eigenvalues;  // ascending
  double lambda_max = 0.0;
  double lambda_2 = 0.0;
  double lambda_m_minus_1 = 0.0;
  double lambda_min = 0.0;
  double kappa = 0.0;           // lambda_1 / lambda_m
  double kappa_eff_m1_1 = 0.0;  // lambda_1 / lambda_{m-1}
  double kappa_eff_m1_2 = 0.0;  // lambda_2 / lambda_{m-1}
};

// Dense eigendecomposition of P^{-1/2} M P^{-T/2} (m capped)
SpectralReport preconditioned_spectrum(const NormalMatrix& M, const Preconditioner& P,
                                       index_t dim_cap = 2000);

enum class Verdict { Pass, Fail, Consistent, Inconclusive };
std::string verdict_name(Verdict v);

struct BoundCheck {
  std::string name;
  Verdict verdict = Verdict::Inconclusive;
  double lhs = 0.0;
  double rhs = 0.0;
  std::string detail;
};

struct TheoremReport {
  DesignInfo design;
  std::vector<BoundCheck> checks;
  bool all_passed() const;
};

// Evaluates every applicable eigenvalue bound and closed form against the
// computed spectra. Bounds that involve unquantified asymptotic slack are
// reported as Consistent/Inconclusive rather than Pass/Fail.
TheoremReport theorem_bound_report(const SpectralReport& ssor,
                                   const SpectralReport& diag,
                                   const SpectralReport& none,
                                   const NormalMatrix& M, const IncidenceMatrix& Z,
                                   const ModelParams& params,
                                   const DesignInfo& design, double slack = 1e-9);

}  // namespace gmmk

#endif  // GMMK_SPECTRAL_HPP_
