#pragma once

// Shared fixtures for the test suites: random instances, conversions to the
// dense oracle's representation, and a planted-cluster dataset generator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "pgsp/oracle.hpp"
#include "pgsp/sparse.hpp"

namespace pgsp::testing {

using Dense01 = std::vector<std::vector<int>>;

inline Dense01 random_dense01(Index m, Index n, double density, std::mt19937_64& rng, bool nonempty = true) {
  std::bernoulli_distribution coin(density);
  Dense01 r(static_cast<std::size_t>(m), std::vector<int>(static_cast<std::size_t>(n), 0));
  bool any = false;
  for (auto& row : r)
    for (auto& v : row) {
      v = coin(rng) ? 1 : 0;
      any = any || v;
    }
  if (nonempty && !any) r[0][0] = 1;
  return r;
}

inline InteractionMatrix to_interactions(const Dense01& r) {
  std::vector<std::pair<Index, Index>> pairs;
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = 0; j < r[i].size(); ++j)
      if (r[i][j]) pairs.emplace_back(static_cast<Index>(i), static_cast<Index>(j));
  return InteractionMatrix(static_cast<Index>(r.size()), r.empty() ? 0 : static_cast<Index>(r[0].size()),
                           std::move(pairs));
}

inline DenseMatrix to_eigen(const oracle::Mat& m) {
  DenseMatrix d(static_cast<Index>(m.rows), static_cast<Index>(m.cols));
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) d(static_cast<Index>(i), static_cast<Index>(j)) = m(i, j);
  return d;
}

inline double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
  if (a.size() == 0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff();
}

inline SparseMatrix random_sparse(Index rows, Index cols, double density, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(density);
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  DenseMatrix d = DenseMatrix::Zero(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j)
      if (coin(rng)) d(i, j) = val(rng);
  return SparseMatrix::from_dense(d);
}

/// Picks a cut-off near `want` that does not split a cluster of eigenvalues:
/// |lambda_k - lambda_{k+1}| >= gap (eigenvalues descending).
inline std::size_t k_at_gap(const std::vector<double>& desc, std::size_t want, double gap) {
  const std::size_t n = desc.size();
  want = std::clamp<std::size_t>(want, 1, n);
  for (std::size_t d = 0; d < n; ++d) {
    for (std::size_t k : {want + d, want - std::min(want - 1, d)}) {
      if (k < 1 || k > n) continue;
      if (k == n || desc[k - 1] - desc[k] >= gap) return k;
    }
  }
  return n;
}

/// Users and items split into `clusters` blocks; a user interacts with items
/// of its own block with probability p_in and elsewhere with p_out.
struct ClusteredData {
  std::vector<std::vector<Index>> train;
  std::vector<std::vector<Index>> test;
};

inline ClusteredData clustered_dataset(Index users, Index items, Index clusters, double p_in, double p_out,
                                       double test_fraction, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ClusteredData out;
  out.train.resize(static_cast<std::size_t>(users));
  out.test.resize(static_cast<std::size_t>(users));
  for (Index u = 0; u < users; ++u) {
    const Index cu = u * clusters / users;
    std::vector<Index> chosen;
    for (Index j = 0; j < items; ++j) {
      const Index cj = j * clusters / items;
      if (unit(rng) < (cu == cj ? p_in : p_out)) chosen.push_back(j);
    }
    std::shuffle(chosen.begin(), chosen.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(chosen.size())));
    out.test[u].assign(chosen.begin(), chosen.begin() + static_cast<std::ptrdiff_t>(n_test));
    out.train[u].assign(chosen.begin() + static_cast<std::ptrdiff_t>(n_test), chosen.end());
    std::sort(out.test[u].begin(), out.test[u].end());
    std::sort(out.train[u].begin(), out.train[u].end());
  }
  return out;
}

inline InteractionMatrix from_lists(const std::vector<std::vector<Index>>& lists, Index items) {
  std::vector<std::pair<Index, Index>> pairs;
  for (std::size_t u = 0; u < lists.size(); ++u)
    for (Index j : lists[u]) pairs.emplace_back(static_cast<Index>(u), j);
  return InteractionMatrix(static_cast<Index>(lists.size()), items, std::move(pairs));
}

}  // namespace pgsp::testing
