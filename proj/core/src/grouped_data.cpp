#include <gmmk/grouped_data.hpp>

#include <stdexcept>
#include <utility>

namespace gmmk {

IncidenceMatrix::IncidenceMatrix(index_t n, std::vector<index_t> factor_offsets,
                                 std::vector<std::vector<index_t>> levels)
    : n_(n), factor_offsets_(std::move(factor_offsets)), levels_(std::move(levels)) {}

vec_t IncidenceMatrix::mult(const vec_t& x) const {
  if (x.size() != cols()) {
    throw std::invalid_argument("IncidenceMatrix::mult: dimension mismatch");
  }
  vec_t y = vec_t::Zero(n_);
  const index_t K = num_factors();
  for (index_t k = 0; k < K; ++k) {
    const index_t off = factor_offsets_[k];
    const auto& lev = levels_[k];
#pragma omp parallel for schedule(static)
    for (index_t i = 0; i < n_; ++i) {
      y[i] += x[off + lev[i]];
    }
  }
  return y;
}

vec_t IncidenceMatrix::mult_t(const vec_t& x) const {
  if (x.size() != n_) {
    throw std::invalid_argument("IncidenceMatrix::mult_t: dimension mismatch");
  }
  vec_t y = vec_t::Zero(cols());
  const index_t K = num_factors();
  for (index_t k = 0; k < K; ++k) {
    const index_t off = factor_offsets_[k];
    const auto& lev = levels_[k];
    for (index_t i = 0; i < n_; ++i) {
      y[off + lev[i]] += x[i];
    }
  }
  return y;
}

vec_t IncidenceMatrix::mult_factor(index_t k, const vec_t& xk) const {
  if (xk.size() != factor_size(k)) {
    throw std::invalid_argument("IncidenceMatrix::mult_factor: dimension mismatch");
  }
  vec_t y(n_);
  const auto& lev = levels_[k];
#pragma omp parallel for schedule(static)
  for (index_t i = 0; i < n_; ++i) {
    y[i] = xk[lev[i]];
  }
  return y;
}

vec_t IncidenceMatrix::mult_factor_t(index_t k, const vec_t& x) const {
  if (x.size() != n_) {
    throw std::invalid_argument("IncidenceMatrix::mult_factor_t: dimension mismatch");
  }
  vec_t y = vec_t::Zero(factor_size(k));
  const auto& lev = levels_[k];
  for (index_t i = 0; i < n_; ++i) {
    y[lev[i]] += x[i];
  }
  return y;
}

vec_t IncidenceMatrix::column_counts() const {
  vec_t c = vec_t::Zero(cols());
  const index_t K = num_factors();
  for (index_t k = 0; k < K; ++k) {
    const index_t off = factor_offsets_[k];
    for (index_t i = 0; i < n_; ++i) {
      c[off + levels_[k][i]] += 1.0;
    }
  }
  return c;
}

sp_mat_t IncidenceMatrix::to_sparse() const {
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(n_) * num_factors());
  for (index_t k = 0; k < num_factors(); ++k) {
    const index_t off = factor_offsets_[k];
    for (index_t i = 0; i < n_; ++i) {
      trips.emplace_back(i, off + levels_[k][i], 1.0);
    }
  }
  sp_mat_t Z(n_, cols());
  Z.setFromTriplets(trips.begin(), trips.end());
  return Z;
}

std::pair<IncidenceMatrix, REStructure> build_incidence(
    const std::vector<std::vector<std::string>>& labels, index_t n) {
  if (labels.empty()) {
    throw std::invalid_argument("build_incidence: no grouping factors given");
  }
  if (n < 1) {
    throw std::invalid_argument("build_incidence: n must be >= 1");
  }
  const index_t K = static_cast<index_t>(labels.size());
  REStructure re;
  re.num_factors = K;
  re.label_to_index.resize(K);
  re.index_to_label.resize(K);
  std::vector<std::vector<index_t>> levels(K);
  for (index_t k = 0; k < K; ++k) {
    if (static_cast<index_t>(labels[k].size()) != n) {
      throw std::invalid_argument("build_incidence: factor column length != n");
    }
    auto& dict = re.label_to_index[k];
    auto& inv = re.index_to_label[k];
    auto& lev = levels[k];
    lev.resize(n);
    for (index_t i = 0; i < n; ++i) {
      auto [it, inserted] =
          dict.try_emplace(labels[k][i], static_cast<index_t>(dict.size()));
      if (inserted) {
        inv.push_back(labels[k][i]);
      }
      lev[i] = it->second;
    }
    re.levels_per_factor.push_back(static_cast<index_t>(dict.size()));
  }
  re.factor_offsets.resize(K + 1);
  re.factor_offsets[0] = 0;
  for (index_t k = 0; k < K; ++k) {
    re.factor_offsets[k + 1] = re.factor_offsets[k] + re.levels_per_factor[k];
  }
  IncidenceMatrix Z(n, re.factor_offsets, std::move(levels));
  return {std::move(Z), std::move(re)};
}

std::pair<IncidenceMatrix, REStructure> build_incidence_from_levels(
    const std::vector<std::vector<index_t>>& levels,
    const std::vector<index_t>& levels_per_factor) {
  if (levels.empty() || levels[0].empty()) {
    throw std::invalid_argument("build_incidence_from_levels: empty input");
  }
  const index_t K = static_cast<index_t>(levels.size());
  const index_t n = static_cast<index_t>(levels[0].size());
  for (index_t k = 0; k < K; ++k) {
    if (static_cast<index_t>(levels[k].size()) != n) {
      throw std::invalid_argument(
          "build_incidence_from_levels: factor column length mismatch");
    }
    for (index_t i = 0; i < n; ++i) {
      if (levels[k][i] < 0 || levels[k][i] >= levels_per_factor[k]) {
        throw std::invalid_argument(
            "build_incidence_from_levels: level index out of range");
      }
    }
  }
  REStructure re;
  re.num_factors = K;
  re.levels_per_factor = levels_per_factor;
  re.factor_offsets.resize(K + 1);
  re.factor_offsets[0] = 0;
  re.label_to_index.resize(K);
  re.index_to_label.resize(K);
  for (index_t k = 0; k < K; ++k) {
    re.factor_offsets[k + 1] = re.factor_offsets[k] + levels_per_factor[k];
    re.index_to_label[k].resize(levels_per_factor[k]);
    for (index_t j = 0; j < levels_per_factor[k]; ++j) {
      std::string lab = std::to_string(j);
      re.index_to_label[k][j] = lab;
      re.label_to_index[k].emplace(std::move(lab), j);
    }
  }
  IncidenceMatrix Z(n, re.factor_offsets, levels);
  return {std::move(Z), std::move(re)};
}

GroupedDesign make_grouped_design(vec_t y, den_mat_t X,
                                  std::vector<std::vector<std::string>> labels) {
  GroupedDesign d;
  const index_t n = y.size();
  if (X.rows() != n) {
    throw std::invalid_argument("make_grouped_design: X rows != length of y");
  }
  auto [Z, re] = build_incidence(labels, n);
  d.y = std::move(y);
  d.X = std::move(X);
  d.group_labels = std::move(labels);
  d.Z = std::move(Z);
  d.re = std::move(re);
  return d;
}

}  // namespace gmmk
