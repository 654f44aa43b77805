#ifndef GMMK_TYPES_HPP_
#define GMMK_TYPES_HPP_

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <random>

namespace gmmk {

using vec_t = Eigen::VectorXd;
using den_mat_t = Eigen::MatrixXd;
// Row-major compressed storage = CSR (row_offsets / col_indices / values)
using sp_mat_t = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;
using index_t = Eigen::Index;
using RNG = std::mt19937_64;

// splitmix64 step, used to decorrelate counter-based seeds
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t counter) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (counter + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline RNG make_rng(std::uint64_t seed, std::uint64_t counter = 0) {
  return RNG(mix_seed(seed, counter));
}

}  // namespace gmmk

#endif  // GMMK_TYPES_HPP_
