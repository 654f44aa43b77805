#ifndef GMMK_GROUPED_DATA_HPP_
#define GMMK_GROUPED_DATA_HPP_

#include <gmmk/types.hpp>

#include <string>
#include <unordered_map>
#include <vector>

namespace gmmk {

// Grouping structure of K crossed factors: level counts and the label
// dictionaries that map raw category values to column indices
// (first-appearance order).
struct REStructure {
  index_t num_factors = 0;                        // K
  std::vector<index_t> levels_per_factor;         // m_j
  std::vector<index_t> factor_offsets;            // size K+1, prefix sums of m_j
  std::vector<std::unordered_map<std::string, index_t>> label_to_index;
  std::vector<std::vector<std::string>> index_to_label;  // inverse maps

  index_t total_levels() const { return factor_offsets.back(); }  // m
};

// Binary incidence matrix Z = (Z_1,...,Z_K): one nonzero (=1) per row and
// factor. Stored as level indices per factor, not as explicit sparse data.
class IncidenceMatrix {
 public:
  IncidenceMatrix() = default;
  IncidenceMatrix(index_t n, std::vector<index_t> factor_offsets,
                  std::vector<std::vector<index_t>> levels);

  index_t rows() const { return n_; }
  index_t cols() const { return factor_offsets_.back(); }
  index_t num_factors() const { return static_cast<index_t>(levels_.size()); }
  index_t factor_offset(index_t k) const { return factor_offsets_[k]; }
  index_t factor_size(index_t k) const {
    return factor_offsets_[k + 1] - factor_offsets_[k];
  }
  // level of observation i within factor k, in [0, m_k)
  index_t level(index_t k, index_t i) const { return levels_[k][i]; }

  // y = Z x
  vec_t mult(const vec_t& x) const;
  // y = Z^T x
  vec_t mult_t(const vec_t& x) const;
  // y = Z_k x_k with x_k of length m_k
  vec_t mult_factor(index_t k, const vec_t& xk) const;
  // y = Z_k^T x with x of length n
  vec_t mult_factor_t(index_t k, const vec_t& x) const;

  // occurrence count per global column (Z^T 1)
  vec_t column_counts() const;

  sp_mat_t to_sparse() const;

 private:
  index_t n_ = 0;
  std::vector<index_t> factor_offsets_;
  std::vector<std::vector<index_t>> levels_;  // levels_[k][i]
};

// Builds Z and the grouping structure from per-factor categorical columns.
// Level indices are assigned in first-appearance order.
std::pair<IncidenceMatrix, REStructure> build_incidence(
    const std::vector<std::vector<std::string>>& labels, index_t n);

// Same but from already-resolved level indices (simulation path).
std::pair<IncidenceMatrix, REStructure> build_incidence_from_levels(
    const std::vector<std::vector<index_t>>& levels,
    const std::vector<index_t>& levels_per_factor);

// Response, fixed-effect design and grouping of one data set.
struct GroupedDesign {
  vec_t y;
  den_mat_t X;                                         // n x p (incl. intercept)
  std::vector<std::vector<std::string>> group_labels;  // K columns of length n
  IncidenceMatrix Z;
  REStructure re;

  index_t num_obs() const { return y.size(); }
};

GroupedDesign make_grouped_design(vec_t y, den_mat_t X,
                                  std::vector<std::vector<std::string>> labels);

}  // namespace gmmk

#endif  // GMMK_GROUPED_DATA_HPP_
